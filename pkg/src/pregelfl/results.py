"""Solver output record shared by the main solver and the baselines."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SolveResult:
    """Opened facilities, per-client assignment and objective.

    ``assignment[c]`` is the serving facility of client c (-1 for
    non-clients) and ``service[c]`` its distance. ``counters`` holds
    run statistics (supersteps, messages, ladder steps, ...); ``trace``
    holds optional diagnostics that are not part of the canonical form.
    """

    opened: list[int]
    assignment: np.ndarray
    service: np.ndarray
    opening_cost: float
    service_cost: float
    counters: dict = field(default_factory=dict)
    trace: dict = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return self.opening_cost + self.service_cost

    def to_dict(self) -> dict:
        clients = np.flatnonzero(self.assignment >= 0)
        return {
            "opened": [int(f) for f in self.opened],
            "assignment": {str(int(c)): int(self.assignment[c]) for c in clients},
            "service": {str(int(c)): float(self.service[c]) for c in clients},
            "objective": float(self.objective),
            "opening_cost": float(self.opening_cost),
            "service_cost": float(self.service_cost),
            "counters": {k: v for k, v in sorted(self.counters.items())},
        }

    def to_json(self) -> str:
        """Canonical JSON (sorted keys, no whitespace, repr floats)."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
