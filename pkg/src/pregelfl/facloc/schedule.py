"""Geometric radius ladder and the upper bound it is anchored to."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..bsp import Aggregator, RunMetrics, ShardContext, VertexProgram, expand_arcs, run
from ..errors import InfeasibleError, NonConvergenceError, ValidationError
from ..graph import CostAssignment, Graph


@dataclass(frozen=True)
class RadiusSchedule:
    """Ladder ``alpha_j = alpha0 * (1+eps)**j`` for j = 0 .. num_steps-1.

    ``alpha0 = (gamma / pair_count**2) * (1+eps)``. The ladder stops once
    alpha would exceed ``gamma * (1+eps)``; at least one step always runs.
    All values come from one precomputed table so a step index maps to
    the same float everywhere.
    """

    eps: float
    gamma: float
    pair_count: int
    base: float
    num_steps: int
    table: tuple = field(repr=False)

    @classmethod
    def build(cls, eps: float, gamma: float, pair_count: int,
              fallback_scale: float = 1.0) -> "RadiusSchedule":
        """``fallback_scale`` stands in for gamma when gamma is 0 so alpha0 stays positive."""
        if not eps > 0 or math.isinf(eps):
            raise ValidationError("eps must be a positive finite number")
        if gamma < 0 or math.isnan(gamma) or math.isinf(gamma):
            raise ValidationError("gamma must be finite and non-negative")
        if pair_count < 1:
            raise ValidationError("pair count must be positive")
        growth = 1.0 + eps
        scale = gamma if gamma > 0 else fallback_scale
        base = scale / float(pair_count) ** 2 * growth
        if not base > 0:
            base = math.ulp(0.0) * growth
        cap = gamma * growth
        values = [base]
        j = 0
        while base * growth ** (j + 1) <= cap:
            j += 1
            values.append(base * growth ** j)
        steps = len(values)
        values.append(base * growth ** steps)
        values.append(base * growth ** (steps + 1))
        return cls(float(eps), float(gamma), int(pair_count), base, steps, tuple(values))

    @property
    def cap(self) -> float:
        return self.gamma * (1.0 + self.eps)

    def alpha(self, j: int) -> float:
        return self.table[j] if 0 <= j < len(self.table) else self.base * (1.0 + self.eps) ** j

    def reach(self, j: int) -> float:
        """Radius ``(1+eps) * alpha_j`` used for contributions and freezing at step j."""
        return self.alpha(j + 1)

    def reach_array(self, steps: np.ndarray) -> np.ndarray:
        steps = np.asarray(steps, dtype=np.int64)
        table = np.asarray(self.table)
        out = np.full(steps.shape, np.nan)
        ok = (steps >= 0) & (steps + 1 < len(table))
        out[ok] = table[steps[ok] + 1]
        return out

    def ladder(self) -> np.ndarray:
        return np.asarray(self.table[: self.num_steps])

    def max_reach(self) -> float:
        return self.table[self.num_steps]


class _GammaProgram(VertexProgram):
    """Multi-source relaxation: value(v) = min_f cost(f) + d(f, v)."""

    def __init__(self, g: Graph, costs: CostAssignment):
        self.g = g
        self.value = np.full(g.n, math.inf)
        fac = costs.facilities
        self.value[fac] = costs.cost[fac]
        self.seeds = fac

    def compute_shard(self, shard: ShardContext) -> None:
        lo, hi = shard.lo, shard.hi
        if shard.superstep == 0:
            mine = self.seeds[(self.seeds >= lo) & (self.seeds < hi)]
        else:
            box = shard.channel("relax")
            mine = np.zeros(0, dtype=np.int64)
            if box:
                dst, val = box["dst"], box["value"]
                cand = np.full(hi - lo, math.inf)
                np.minimum.at(cand, dst - lo, val)
                better = cand < self.value[lo:hi]
                mine = np.flatnonzero(better) + lo
                self.value[mine] = cand[better]
        if len(mine):
            pos, nbr, w = expand_arcs(self.g, mine)
            if len(nbr):
                shard.send_batch("relax", mine[pos], nbr, value=self.value[mine][pos] + w)
        shard.halt_all()


@dataclass
class Gamma:
    value: float
    per_vertex: np.ndarray
    metrics: RunMetrics


def compute_gamma(g: Graph, costs: CostAssignment, workers: int | None = 1,
                  max_supersteps: int = 1_000_000) -> Gamma:
    """Max over clients of min_f cost(f) + d(f, c), by relaxation on the engine.

    Raises InfeasibleError naming the smallest client id that no facility reaches.
    """
    if len(costs.cost) != g.n:
        raise ValidationError("cost assignment does not match the graph size")
    prog = _GammaProgram(g, costs)
    res = run(g, prog, aggregators=[Aggregator("unused", "or")],
              max_supersteps=max_supersteps, workers=workers)
    if not res.converged:
        raise NonConvergenceError("gamma relaxation hit the superstep cap")
    per_client = prog.value
    cli = costs.clients
    bad = cli[~np.isfinite(per_client[cli])]
    if len(bad):
        raise InfeasibleError(f"client {int(bad[0])} cannot reach any facility", int(bad[0]))
    return Gamma(float(per_client[cli].max()), per_client, res.metrics)


def gamma_fallback(g: Graph, costs: CostAssignment) -> float:
    """Positive stand-in scale when gamma is zero."""
    pos = costs.cost[costs.is_facility]
    pos = pos[pos > 0]
    candidates = []
    if len(pos):
        candidates.append(float(pos.min()))
    if g.num_arcs:
        candidates.append(g.min_weight())
    return min(candidates) if candidates else 1.0
