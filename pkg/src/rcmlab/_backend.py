"""Backend selection: compiled Cython kernels when importable, numpy otherwise.

Set RCMLAB_NO_EXT=1 to force the pure-Python path (used by the benchmark and
the backend-equivalence tests).
"""

from __future__ import annotations

import os

try:
    from . import _core as _compiled  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on the build environment
    _compiled = None


def core(override: str | None = None):
    """The compiled kernel module, or None when the fallback must be used."""
    if override == "python":
        return None
    if override == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled backend requested but rcmlab._core is not built")
        return _compiled
    if os.environ.get("RCMLAB_NO_EXT"):
        return None
    return _compiled


def backend_name() -> str:
    return "python" if core() is None else "compiled"
