"""Superstep engine, aggregators, bounded broadcast and phase switching."""

from .aggregators import Aggregator
from .broadcast import BoundedBroadcast, LabelFlood, broadcast_within, expand_arcs
from .engine import (
    IsolatedStore,
    MasterContext,
    RunMetrics,
    RunResult,
    ShardContext,
    VertexContext,
    VertexProgram,
    VertexStore,
    run,
)
from .phases import STATE, SWITCH, PhaseSwitch

__all__ = [
    "Aggregator",
    "BoundedBroadcast",
    "LabelFlood",
    "broadcast_within",
    "expand_arcs",
    "IsolatedStore",
    "MasterContext",
    "RunMetrics",
    "RunResult",
    "ShardContext",
    "VertexContext",
    "VertexProgram",
    "VertexStore",
    "run",
    "STATE",
    "SWITCH",
    "PhaseSwitch",
]
