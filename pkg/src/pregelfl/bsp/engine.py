"""In-process Pregel-style superstep engine.

Vertices are split into contiguous shards that run concurrently inside a
superstep and only exchange data at the barrier. Messages sent in
superstep t are delivered in t+1; aggregator contributions from t are
readable in t+1, and values set by the master before t are readable in t.

Two message paths exist. Object messages go through ``send`` and arrive
as per-vertex lists. Columnar messages go through ``send_batch`` on a
named channel and arrive as numpy arrays sorted by destination. Both are
put in a canonical order at the barrier (destination, then sender, then
send order) so results do not depend on the shard layout.
"""

from __future__ import annotations

import os
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from ..errors import ConfigurationError, ContractError
from ..graph import Graph
from .aggregators import Aggregator

__all__ = [
    "VertexProgram",
    "VertexContext",
    "ShardContext",
    "MasterContext",
    "RunMetrics",
    "RunResult",
    "VertexStore",
    "IsolatedStore",
    "run",
]


@dataclass
class RunMetrics:
    supersteps: int = 0
    messages: int = 0
    phases: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def record(self, phase: str, messages: int) -> None:
        slot = self.phases.setdefault(phase, {"supersteps": 0, "messages": 0})
        slot["supersteps"] += 1
        slot["messages"] += messages

    def to_dict(self) -> dict:
        return {
            "supersteps": self.supersteps,
            "messages": self.messages,
            "phases": {k: dict(v) for k, v in self.phases.items()},
        }


@dataclass
class RunResult:
    state: Any
    metrics: RunMetrics
    converged: bool
    aggregators: dict

    @property
    def timed_out(self) -> bool:
        return not self.converged


class VertexStore:
    """Per-vertex values for programs written against the per-vertex API."""

    def __init__(self, values: Sequence[Any]):
        self._values = list(values)

    def get(self, v: int) -> Any:
        return self._values[v]

    def set(self, v: int, value: Any) -> None:
        self._values[v] = value

    def __len__(self) -> int:
        return len(self._values)

    def __getitem__(self, v: int) -> Any:
        return self._values[v]

    def as_list(self) -> list:
        return list(self._values)


class IsolatedStore(VertexStore):
    """Store that rejects access to any slot other than the bound vertex.

    Used to check that per-vertex programs never read a neighbor's state.
    Not thread-safe; run with one worker.
    """

    def __init__(self, values: Sequence[Any]):
        super().__init__(values)
        self._bound: int | None = None
        self.accesses = 0

    def bind(self, v: int) -> None:
        self._bound = v

    def _check(self, v: int) -> None:
        self.accesses += 1
        if self._bound is not None and v != self._bound:
            raise ContractError(f"vertex {self._bound} touched the state of vertex {v}")

    def get(self, v: int) -> Any:
        self._check(v)
        return super().get(v)

    def set(self, v: int, value: Any) -> None:
        self._check(v)
        super().set(v, value)


class VertexProgram:
    """Base class; override ``compute`` or ``compute_shard``.

    ``compute`` sees one vertex at a time through a :class:`VertexContext`.
    ``compute_shard`` sees a whole shard and is meant for vectorized
    programs that keep their state in arrays indexed by vertex id; such
    programs must only touch indices inside ``shard.lo:shard.hi``.
    """

    def compute(self, ctx: "VertexContext") -> None:  # pragma: no cover - abstract
        raise NotImplementedError

    def compute_shard(self, shard: "ShardContext") -> None:
        ctx = VertexContext(shard)
        for v in shard.compute_set().tolist():
            ctx._bind(v)
            self.compute(ctx)


class _Outbox:
    __slots__ = ("objects", "columns", "agg", "halts", "seq", "messages")

    def __init__(self):
        self.objects: list = []
        self.columns: dict = defaultdict(list)
        self.agg: dict = defaultdict(list)
        self.halts: list = []
        self.seq = 0
        self.messages = 0


class ShardContext:
    """View of one shard during one superstep."""

    def __init__(self, engine: "_Engine", index: int, lo: int, hi: int):
        self._engine = engine
        self.index = index
        self.lo = lo
        self.hi = hi
        self._out = _Outbox()

    # read side
    @property
    def superstep(self) -> int:
        return self._engine.superstep

    @property
    def graph(self) -> Graph:
        return self._engine.graph

    @property
    def state(self) -> Any:
        return self._engine.state

    @property
    def num_vertices(self) -> int:
        return self._engine.graph.n

    def aggregated(self, name: str) -> Any:
        return self._engine.aggregator(name).value

    def aggregated_delta(self, name: str) -> frozenset:
        return self._engine.aggregator(name).delta

    def compute_set(self) -> np.ndarray:
        """Vertices of this shard that run this superstep (active or messaged)."""
        e = self._engine
        sl = slice(self.lo, self.hi)
        run = ~e.halted[sl] | e.has_mail[sl]
        return np.flatnonzero(run) + self.lo

    def messages(self, v: int) -> list:
        return self._engine.inbox.get(v, [])

    def channel(self, name: str) -> dict:
        """Columnar inbox of this shard for ``name``: dict of arrays incl. src/dst."""
        e = self._engine
        batch = e.columnar.get(name)
        if batch is None:
            return {}
        a, b = e.shard_slices[name][self.index]
        return {k: v[a:b] for k, v in batch.items()}

    # write side
    def send(self, src: int, dst: int, message: Any) -> None:
        out = self._out
        out.objects.append((dst, src, out.seq, message))
        out.seq += 1
        out.messages += 1

    def send_batch(self, name: str, src: np.ndarray, dst: np.ndarray, **cols: np.ndarray) -> None:
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if len(dst) == 0:
            return
        if src.shape != dst.shape:
            src = np.broadcast_to(src, dst.shape).copy()
        part = {"src": src, "dst": dst}
        for k, v in cols.items():
            v = np.asarray(v)
            part[k] = np.broadcast_to(v, dst.shape).copy() if v.shape != dst.shape else v
        self._out.columns[name].append(part)
        self._out.messages += len(dst)

    def aggregate(self, name: str, value: Any) -> None:
        self._out.agg[name].append(value)

    def vote_to_halt(self, v: int | np.ndarray) -> None:
        self._out.halts.append(np.atleast_1d(np.asarray(v, dtype=np.int64)))

    def halt_all(self) -> None:
        self.vote_to_halt(np.arange(self.lo, self.hi))


class VertexContext:
    """Per-vertex facade over a shard; reads and writes only its own slot."""

    __slots__ = ("_shard", "vertex")

    def __init__(self, shard: ShardContext):
        self._shard = shard
        self.vertex = -1

    def _bind(self, v: int) -> None:
        self.vertex = v
        bind = getattr(self._shard.state, "bind", None)
        if bind is not None:
            bind(v)

    @property
    def superstep(self) -> int:
        return self._shard.superstep

    @property
    def num_vertices(self) -> int:
        return self._shard.num_vertices

    @property
    def value(self) -> Any:
        return self._shard.state.get(self.vertex)

    @value.setter
    def value(self, val: Any) -> None:
        self._shard.state.set(self.vertex, val)

    @property
    def messages(self) -> list:
        return self._shard.messages(self.vertex)

    def edges(self) -> Iterable[tuple[int, float]]:
        nb, w = self._shard.graph.neighbors(self.vertex)
        return zip(nb.tolist(), w.tolist())

    def send(self, dst: int, message: Any) -> None:
        self._shard.send(self.vertex, dst, message)

    def send_to_neighbors(self, message: Any) -> None:
        for u, _ in self.edges():
            self._shard.send(self.vertex, u, message)

    def aggregate(self, name: str, value: Any) -> None:
        self._shard.aggregate(name, value)

    def aggregated(self, name: str) -> Any:
        return self._shard.aggregated(name)

    def vote_to_halt(self) -> None:
        self._shard.vote_to_halt(self.vertex)


class MasterContext:
    """Master-side view, run alone at the barrier before each superstep."""

    def __init__(self, engine: "_Engine"):
        self._engine = engine
        self.phase = "main"
        self._halt = False

    @property
    def superstep(self) -> int:
        return self._engine.superstep

    @property
    def metrics(self) -> RunMetrics:
        return self._engine.metrics

    @property
    def state(self) -> Any:
        return self._engine.state

    @property
    def messages_in_flight(self) -> int:
        return self._engine.in_flight

    def get(self, name: str) -> Any:
        return self._engine.aggregator(name).value

    def delta(self, name: str) -> frozenset:
        return self._engine.aggregator(name).delta

    def set(self, name: str, value: Any) -> None:
        self._engine.aggregator(name).value = value

    def halt(self) -> None:
        self._halt = True


MasterFn = Callable[[MasterContext], None]


class _Engine:
    def __init__(self, graph: Graph, program: VertexProgram, master: MasterFn | None,
                 aggregators: Iterable[Aggregator], state: Any, workers: int):
        self.graph = graph
        self.program = program
        self.master = master
        self.aggs = {}
        for a in aggregators:
            if a.name in self.aggs:
                raise ConfigurationError(f"duplicate aggregator {a.name!r}")
            self.aggs[a.name] = a
        self.state = state
        n = graph.n
        workers = max(1, min(int(workers), max(n, 1)))
        bounds = np.linspace(0, n, workers + 1).astype(np.int64)
        self.shards = [(i, int(bounds[i]), int(bounds[i + 1])) for i in range(workers)]
        self.bounds = bounds
        self.superstep = 0
        self.halted = np.zeros(n, dtype=bool)
        self.has_mail = np.zeros(n, dtype=bool)
        self.inbox: dict = {}
        self.columnar: dict = {}
        self.shard_slices: dict = {}
        self.in_flight = 0
        self.metrics = RunMetrics()
        self.pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def aggregator(self, name: str) -> Aggregator:
        try:
            return self.aggs[name]
        except KeyError:
            raise ConfigurationError(f"unknown aggregator {name!r}") from None

    def _run_shard(self, shard: tuple[int, int, int]) -> _Outbox:
        ctx = ShardContext(self, *shard)
        self.program.compute_shard(ctx)
        return ctx._out

    def step(self) -> tuple[int, int]:
        shards = self.shards
        if self.pool is not None:
            outs = list(self.pool.map(self._run_shard, shards))
        else:
            outs = [self._run_shard(s) for s in shards]
        # barrier: halts, aggregators, messages
        for out in outs:
            for hv in out.halts:
                self.halted[hv] = True
        contrib: dict = defaultdict(list)
        for out in outs:
            for name, vals in out.agg.items():
                contrib[name].extend(vals)
        for name, agg in self.aggs.items():
            agg.reduce(contrib.get(name, []))
        unknown = set(contrib) - set(self.aggs)
        if unknown:
            raise ConfigurationError(f"unknown aggregator(s) {sorted(unknown)}")
        sent = sum(o.messages for o in outs)
        objs = [m for o in outs for m in o.objects]
        objs.sort(key=lambda m: (m[0], m[1], m[2]))
        inbox: dict = defaultdict(list)
        for dst, _src, _seq, msg in objs:
            inbox[dst].append(msg)
        self.inbox = dict(inbox)
        self.columnar = {}
        self.shard_slices = {}
        names = sorted({k for o in outs for k in o.columns})
        for name in names:
            parts = [p for o in outs for p in o.columns.get(name, [])]
            keys = set(parts[0])
            if any(set(p) != keys for p in parts):
                raise ConfigurationError(f"channel {name!r} parts disagree on columns")
            batch = {k: np.concatenate([p[k] for p in parts]) for k in keys}
            order = np.lexsort((batch["src"], batch["dst"]))
            batch = {k: v[order] for k, v in batch.items()}
            self.columnar[name] = batch
            cuts = np.searchsorted(batch["dst"], self.bounds)
            self.shard_slices[name] = [(int(cuts[i]), int(cuts[i + 1]))
                                       for i in range(len(self.shards))]
        self.has_mail[:] = False
        if self.inbox:
            self.has_mail[np.fromiter(self.inbox.keys(), dtype=np.int64)] = True
        for batch in self.columnar.values():
            self.has_mail[batch["dst"]] = True
        self.halted[self.has_mail] = False
        self.in_flight = sent
        return sent, len(objs)

    def close(self) -> None:
        if self.pool is not None:
            self.pool.shutdown(wait=True)


def default_workers() -> int:
    return os.cpu_count() or 1


def run(graph: Graph, program: VertexProgram, master: MasterFn | None = None,
        aggregators: Iterable[Aggregator] = (), initial_state: Any = None,
        max_supersteps: int = 100_000, workers: int | None = None) -> RunResult:
    """Execute ``program`` until quiescence, master halt, or the superstep cap.

    Quiescence means every vertex voted to halt and no message is in
    flight. Hitting ``max_supersteps`` returns a result with
    ``converged=False`` and the partial state.
    """
    if workers is None:
        workers = default_workers()
    engine = _Engine(graph, program, master, aggregators, initial_state, workers)
    mctx = MasterContext(engine)
    t0 = time.perf_counter()
    converged = False
    try:
        while True:
            if master is not None:
                master(mctx)
                if mctx._halt:
                    converged = True
                    break
            if engine.superstep >= max_supersteps:
                break
            sent, _ = engine.step()
            engine.metrics.supersteps += 1
            engine.metrics.messages += sent
            engine.metrics.record(mctx.phase, sent)
            engine.superstep += 1
            if sent == 0 and engine.halted.all():
                converged = True
                break
    finally:
        engine.close()
    engine.metrics.wall_time = time.perf_counter() - t0
    return RunResult(
        state=engine.state,
        metrics=engine.metrics,
        converged=converged,
        aggregators={k: a.value for k, a in engine.aggs.items()},
    )
