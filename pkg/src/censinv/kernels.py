"""Selects the compiled slice kernel when available.

``BACKEND`` is ``"cython"`` or ``"numpy"``.  Setting the environment
variable ``CENSINV_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _kernels_py

try:
    if os.environ.get("CENSINV_PURE_PYTHON"):
        raise ImportError
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"
continuation = (_compiled or _kernels_py).continuation
continuation_py = _kernels_py.continuation
continuation_c = _compiled.continuation if _compiled is not None else None
