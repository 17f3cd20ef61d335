"""Hot-loop kernels with a numba path and a pure-numpy fallback.

The backend is chosen once, at import time, from the ``BREATHAUTH_KERNELS``
environment variable:

* ``numba`` (default): compiled kernels; falls back to numpy with a warning
  if numba cannot be imported.
* ``numpy``: pure-numpy kernels, no compilation.

Both backends are always importable as ``_numpy`` / ``_numba`` so that the
benchmark can time them side by side.
"""

import logging
import os

from . import _numpy

log = logging.getLogger(__name__)

ENV_VAR = "BREATHAUTH_KERNELS"

_requested = os.environ.get(ENV_VAR, "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"{ENV_VAR} must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numba":
    try:
        from . import _numba as _impl

        BACKEND = "numba"
    except ImportError:  # pragma: no cover - depends on environment
        log.warning("numba unavailable, using numpy kernels")
        _impl = _numpy
        BACKEND = "numpy"
else:
    _impl = _numpy
    BACKEND = "numpy"

lstm_gates_forward = _impl.lstm_gates_forward
lstm_gates_backward = _impl.lstm_gates_backward
pegasos_pass = _impl.pegasos_pass
elbow_scan = _impl.elbow_scan
sigmoid = _numpy.sigmoid

__all__ = [
    "BACKEND",
    "ENV_VAR",
    "elbow_scan",
    "lstm_gates_backward",
    "lstm_gates_forward",
    "pegasos_pass",
    "sigmoid",
]
