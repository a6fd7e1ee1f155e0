"""Backend selection for the quadratic kernels.

The compiled extension (tnn._kernels_c) is preferred when importable; the
numpy implementation is the fallback. TNN_BACKEND=py|ext|auto overrides.
"""

import os

from tnn import _kernels_np

_choice = os.environ.get("TNN_BACKEND", "auto").lower()
if _choice not in ("auto", "ext", "py"):
    raise ValueError(f"TNN_BACKEND must be one of auto/ext/py, got {_choice!r}")

if _choice == "py":
    _active = _kernels_np
else:
    try:
        from tnn import _kernels_c as _active  # type: ignore[no-redef]
    except ImportError:
        if _choice == "ext":
            raise
        _active = _kernels_np


def backend_name() -> str:
    """Name of the kernel backend selected at import: 'ext' or 'py'."""
    return _active.BACKEND


def get_backend(name=None):
    """Kernel module by name ('ext' or 'py'); default is the active one."""
    if name is None:
        return _active
    if name == "py":
        return _kernels_np
    if name == "ext":
        from tnn import _kernels_c

        return _kernels_c
    raise ValueError(f"unknown backend {name!r}")


naive_matvec = _active.naive_matvec
coeff_grad = _active.coeff_grad
causal_naive_matvec = _active.causal_naive_matvec
