"""Kernel selection: the compiled extension when built, numpy otherwise.

Set ``ADTRADEOFFS_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _kernel_py

TRUTHFUL = _kernel_py.TRUTHFUL
LOWEST_SNE_GSP = _kernel_py.LOWEST_SNE_GSP

_native = None
if not os.environ.get("ADTRADEOFFS_PURE_PYTHON"):
    try:
        from . import _kernel as _native  # type: ignore[attr-defined]
    except ImportError:
        _native = None

BACKEND = "cython" if _native is not None else "numpy"
simulate_linear = _native.simulate_linear if _native is not None else _kernel_py.simulate_linear
simulate_linear_py = _kernel_py.simulate_linear
