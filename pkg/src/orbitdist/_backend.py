"""Kernel selection.

The compiled extension is used when it imports; otherwise the numpy
fallback.  Setting ``ORBITDIST_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and not os.environ.get("ORBITDIST_PURE_PYTHON"):
    kernels = _compiled
    BACKEND = "compiled"
else:
    kernels = _fallback
    BACKEND = "python"


def available_backends() -> dict:
    """Every importable kernel module, keyed by backend name."""
    out = {"python": _fallback}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out
