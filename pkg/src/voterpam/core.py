"""Backend selection for the simulation kernels.

The compiled extension is used when importable; ``VOTERPAM_PURE=1`` forces the
pure-Python fallback, which produces identical numbers (just slowly).
"""
from __future__ import annotations

import os

from . import _pycore

try:
    from . import _core as compiled
except ImportError:  # pragma: no cover - depends on build
    compiled = None

if compiled is None or os.environ.get("VOTERPAM_PURE", "") not in ("", "0"):
    impl = _pycore
    BACKEND = "python"
else:
    impl = compiled
    BACKEND = "cython"


def backend(name=None):
    """Kernel module for ``name`` ('cython', 'python', or None for the default)."""
    if name is None:
        return impl
    if name == "python":
        return _pycore
    if name == "cython":
        if compiled is None:
            raise ImportError("compiled core unavailable")
        return compiled
    raise ValueError(f"unknown backend {name!r}")
