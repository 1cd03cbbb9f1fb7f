"""Kernel backend selection.

The compiled extension is used when importable; otherwise the pure NumPy
fallback. Set ``BLOCKHAWKES_BACKEND=python`` to force the fallback (used by
the parity tests and the benchmark), or ``=compiled`` to require the
extension and fail loudly if it is missing.
"""

import os

_requested = os.environ.get("BLOCKHAWKES_BACKEND", "").strip().lower()

if _requested == "python":
    from . import _pykernels as kernels
    BACKEND = "python"
elif _requested in ("", "compiled"):
    try:
        from . import _ckernels as kernels  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        if _requested:
            raise
        from . import _pykernels as kernels
        BACKEND = "python"
else:
    raise ValueError(
        f"BLOCKHAWKES_BACKEND={_requested!r} not recognized; "
        "use 'compiled' or 'python'"
    )

__all__ = ["kernels", "BACKEND"]
