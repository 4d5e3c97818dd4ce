"""Backend selection for the per-round kernels.

The compiled extension is used when it imported and the hedge is a built-in
family; otherwise the pure-Python twin runs. Set ``UFQSH_PURE_PYTHON=1`` to
force the fallback everywhere.
"""
from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if os.environ.get("UFQSH_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
UNBOUNDED_BELOW = _kernels_py.UNBOUNDED_BELOW
MINIMUM = _kernels_py.MINIMUM


def compiled_available() -> bool:
    return _compiled is not None


def backend_for(hedge, prefer: str | None = None):
    """Kernel module for this hedge; ``prefer`` may force 'python' or 'compiled'."""
    if prefer == "python":
        return _kernels_py
    if prefer == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        if not hedge.builtin:
            raise TypeError("compiled kernels only support built-in hedges")
        return _compiled
    if _compiled is not None and hedge.builtin:
        return _compiled
    return _kernels_py
