"""Hot kernels with a compiled core and a numpy fallback.

The compiled extension is used when it imports; set ``HIMO_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active implementation.
"""
from __future__ import annotations

import os

from . import _fallback

if os.environ.get("HIMO_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

gru_gates_forward = _impl.gru_gates_forward
gru_gates_backward = _impl.gru_gates_backward
render_portal = _impl.render_portal


def get_backend(name: str):
    """Return the kernel module called ``name`` ("cython" or "python")."""
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends() -> list[str]:
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401
        names.append("cython")
    except ImportError:
        pass
    return names
