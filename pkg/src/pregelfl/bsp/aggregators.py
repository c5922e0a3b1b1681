"""Global reductions readable one superstep after they are written."""

from __future__ import annotations

import math
from typing import Any, Iterable

import numpy as np

from ..errors import ConfigurationError

OPS = ("sum", "and", "or", "min", "max", "union", "overwrite")


def _identity(op: str) -> Any:
    return {
        "sum": 0,
        "and": True,
        "or": False,
        "min": math.inf,
        "max": -math.inf,
        "union": frozenset(),
        "overwrite": None,
    }[op]


class Aggregator:
    """Associative-commutative reduction over vertex contributions.

    ``overwrite`` is reserved for master-owned values such as the current
    phase name; vertices may read it but contributions are rejected.
    Persistent aggregators fold new contributions into the previous value
    instead of restarting from the identity each superstep. Float sums use
    ``math.fsum`` so the result does not depend on contribution order.
    """

    def __init__(self, name: str, op: str, persistent: bool = False, initial: Any = None):
        if op not in OPS:
            raise ConfigurationError(f"unknown aggregator op {op!r}")
        self.name = name
        self.op = op
        self.persistent = persistent
        self.value = _identity(op) if initial is None else initial
        self.delta: frozenset = frozenset()

    def identity(self) -> Any:
        return _identity(self.op)

    def reduce(self, contributions: list) -> None:
        """Combine one superstep's contributions into ``value``."""
        base = self.value if self.persistent else self.identity()
        op = self.op
        if op == "overwrite":
            if contributions:
                raise ConfigurationError(f"aggregator {self.name!r} is master-owned")
            return
        if op == "union":
            new: set = set()
            for c in contributions:
                if isinstance(c, np.ndarray):
                    new.update(c.tolist())
                elif isinstance(c, (set, frozenset, list, tuple)):
                    new.update(c)
                else:
                    new.add(c)
            self.delta = frozenset(new - base) if self.persistent else frozenset(new)
            self.value = frozenset(base | new) if self.persistent else frozenset(new)
            return
        flat = _flatten(contributions)
        if op == "sum":
            vals = [base] + flat
            if all(isinstance(x, int) for x in vals):
                self.value = sum(vals)
            else:
                self.value = math.fsum(vals)
        elif op == "and":
            self.value = bool(base) and all(bool(x) for x in flat)
        elif op == "or":
            self.value = bool(base) or any(bool(x) for x in flat)
        elif op == "min":
            self.value = min([base] + flat)
        elif op == "max":
            self.value = max([base] + flat)

    def __repr__(self) -> str:
        return f"Aggregator({self.name!r}, {self.op!r}, value={self.value!r})"


def _flatten(contributions: Iterable) -> list:
    out: list = []
    for c in contributions:
        if isinstance(c, np.ndarray):
            out.extend(c.tolist())
        else:
            out.append(c.item() if isinstance(c, np.generic) else c)
    return out
