"""Kernel dispatch: compiled ``_speedups`` when importable, else ``_pykernels``.

Set ``OPTGEO_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

if os.environ.get("OPTGEO_PURE_PYTHON") == "1":
    _impl = _pykernels
else:
    try:
        from . import _speedups as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND
greedy_spanner = _impl.greedy_spanner
dijkstra_apsp = _impl.dijkstra_apsp
snap_nearest = _impl.snap_nearest
sorted_pairs = _pykernels.sorted_pairs


def available_backends():
    out = {"python": _pykernels}
    try:
        from . import _speedups
        out["cython"] = _speedups
    except ImportError:
        pass
    return out
