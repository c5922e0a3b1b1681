"""Facility location solver: radius ladder, opening rule, freezing, selection."""

from .ladder import Accumulator, EntryTable
from .programs import ClientBook, freeze_clients, nearest_source
from .schedule import RadiusSchedule, compute_gamma
from .solver import assign_residual, solve

__all__ = [
    "Accumulator",
    "EntryTable",
    "ClientBook",
    "freeze_clients",
    "nearest_source",
    "RadiusSchedule",
    "compute_gamma",
    "assign_residual",
    "solve",
]
