"""Kernel backend selection.

The compiled extension is used when it imports; setting ``PREGELFL_PURE=1``
forces the pure-Python fallback.
"""

from __future__ import annotations

import os

from . import _pycore

if os.environ.get("PREGELFL_PURE", "") not in ("", "0"):
    _impl = _pycore
    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pycore
        BACKEND = "python"

sssp = _impl.sssp
multi_source = _impl.multi_source
distance_rows = _impl.distance_rows
ads_build = _impl.ads_build
hip_weights = _impl.hip_weights
ladder_step = _impl.ladder_step
frozen_delta = _impl.frozen_delta
ls_nearest = _impl.ls_nearest
ls_best_move = _impl.ls_best_move

__all__ = [
    "BACKEND",
    "sssp",
    "multi_source",
    "distance_rows",
    "ads_build",
    "hip_weights",
    "ladder_step",
    "frozen_delta",
    "ls_nearest",
    "ls_best_move",
]
