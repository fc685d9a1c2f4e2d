"""Hot numerical kernels: compiled extension with a pure-NumPy fallback.

The backend is chosen at import time.  Set ``MULTIPATCH_KERNELS`` to
``compiled`` or ``python`` to force one; the default (``auto``) prefers
the compiled extension and silently falls back when it is missing.
"""
from __future__ import annotations

import os

from . import fallback

_choice = os.environ.get("MULTIPATCH_KERNELS", "auto").strip().lower()
if _choice not in ("auto", "compiled", "python"):
    raise ImportError(f"MULTIPATCH_KERNELS must be auto|compiled|python, got {_choice!r}")

if _choice == "python":
    _impl = fallback
    BACKEND = "python"
else:
    try:
        from . import _stencil as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise ImportError(
                "MULTIPATCH_KERNELS=compiled but the extension is not built; "
                "reinstall the package or use MULTIPATCH_KERNELS=python"
            ) from None
        _impl = fallback
        BACKEND = "python"

lap_apply = _impl.lap_apply
coupled_apply = _impl.coupled_apply
cg_jacobi = _impl.cg_jacobi

__all__ = ["BACKEND", "lap_apply", "coupled_apply", "cg_jacobi", "fallback"]
