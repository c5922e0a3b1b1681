"""Master-driven phase switching.

Vertices write to a boolean-and ``SwitchState`` aggregator; when it
reduces to true the master picks the next phase and publishes it through
the master-owned ``State`` aggregator, which every vertex reads before
branching.
"""

from __future__ import annotations

from typing import Callable, Iterable

from ..errors import ConfigurationError
from .aggregators import Aggregator
from .engine import MasterContext, ShardContext

STATE = "State"
SWITCH = "SwitchState"


class PhaseSwitch:
    def __init__(self, phases: Iterable[str], initial: str):
        self.phases = frozenset(phases)
        if initial not in self.phases:
            raise ConfigurationError(f"initial phase {initial!r} not among {sorted(self.phases)}")
        self.initial = initial
        self.transcript: list[tuple[int, str]] = []

    def aggregators(self) -> list[Aggregator]:
        # SwitchState starts false so the first superstep runs the initial phase
        return [Aggregator(STATE, "overwrite", initial=self.initial),
                Aggregator(SWITCH, "and", initial=False)]

    def current(self, ctx: MasterContext | ShardContext) -> str:
        if isinstance(ctx, MasterContext):
            state = ctx.get(STATE)
        else:
            state = ctx.aggregated(STATE)
        if state not in self.phases:
            raise ConfigurationError(f"unknown State value {state!r}")
        return state

    def switch_requested(self, mctx: MasterContext) -> bool:
        return bool(mctx.get(SWITCH))

    def enter(self, mctx: MasterContext, phase: str) -> None:
        if phase not in self.phases:
            raise ConfigurationError(f"unknown State value {phase!r}")
        mctx.set(STATE, phase)
        mctx.phase = phase
        self.transcript.append((mctx.superstep, phase))

    def dispatch(self, shard: ShardContext, table: dict[str, Callable[[ShardContext], None]]) -> None:
        state = self.current(shard)
        try:
            handler = table[state]
        except KeyError:
            raise ConfigurationError(f"no handler for State {state!r}") from None
        handler(shard)
