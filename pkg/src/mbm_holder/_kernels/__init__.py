"""Hot kernels, compiled when available.

The Cython extension is used unless it failed to build or the environment
variable ``MBM_HOLDER_PURE_PYTHON`` is set; ``BACKEND`` records the choice.
"""
import os

from . import _pykernels as python

compiled = None
if not os.environ.get("MBM_HOLDER_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled
    except ImportError:  # extension not built
        compiled = None

_impl = compiled if compiled is not None else python
BACKEND = "cython" if compiled is not None else "python"

fill_gram_lower = _impl.fill_gram_lower
block_coefficients = _impl.block_coefficients

__all__ = ["BACKEND", "fill_gram_lower", "block_coefficients", "python", "compiled"]
