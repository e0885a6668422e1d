"""Select the kernel implementation at import time.

The compiled ``midas._kernels`` is used when it imports cleanly; setting the
environment variable ``MIDAS_PURE_PYTHON=1`` forces the pure-Python fallback.
"""
import os

from . import _kernels_py

FIT_OK = _kernels_py.FIT_OK
FIT_NO_EVENTS = _kernels_py.FIT_NO_EVENTS
FIT_DIVERGED = _kernels_py.FIT_DIVERGED


def _load():
    if os.environ.get("MIDAS_PURE_PYTHON", "").strip() not in ("", "0"):
        return _kernels_py, "python"
    try:
        from . import _kernels
    except ImportError:
        return _kernels_py, "python"
    return _kernels, "compiled"


kernels, BACKEND = _load()

cumulative_counts = kernels.cumulative_counts
fit_cdf_batch = kernels.fit_cdf_batch
spirit_track = kernels.spirit_track
