"""Kernel backend selection.

Prefers the compiled Cython extension; falls back to the pure-numpy kernel
when the extension is missing or when DPDESK_BACKEND=python is set. Both
backends implement the same `backprop_per_example` contract and the same
fixed reduction order, so they agree to floating-point roundoff.
"""

import os

if os.environ.get("DPDESK_BACKEND", "").lower() in ("python", "py"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as kernels

BACKEND_NAME = kernels.BACKEND_NAME
backprop_per_example = kernels.backprop_per_example
