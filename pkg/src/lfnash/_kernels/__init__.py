"""Kernel backend selection.

The dense active-set iteration is the hot loop of everything above it (each
branch-and-bound node, each projection, each best response solves one or more
QPs).  A compiled Cython twin is built when possible; the pure-NumPy module is
the always-available fallback.  Set LFNASH_BACKEND=py or =cy to force one.
"""

import os

from .qp_py import MAXITER, OPTIMAL, UNBOUNDED

_requested = os.environ.get("LFNASH_BACKEND", "auto").strip().lower()

if _requested in ("auto", ""):
    try:
        from ._active_set import active_set_qp

        _backend_name = "compiled"
    except ImportError:
        from .qp_py import active_set_qp

        _backend_name = "python"
elif _requested in ("cy", "c", "compiled"):
    from ._active_set import active_set_qp

    _backend_name = "compiled"
elif _requested in ("py", "python", "numpy"):
    from .qp_py import active_set_qp

    _backend_name = "python"
else:
    raise ImportError(f"unknown LFNASH_BACKEND value: {_requested!r} (use 'py', 'cy', or 'auto')")


def backend_name() -> str:
    return _backend_name
