"""Kernel backend selection.

The compiled extension is used when it imports; ``GRAPHSCORE_PURE_PYTHON=1``
forces the numpy fallback.
"""

import os

if os.environ.get("GRAPHSCORE_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _kernels_py as _impl

        BACKEND = "python"

subset_loglik_grad = _impl.subset_loglik_grad
inclusion_probs = _impl.inclusion_probs
gpvar_recursion = _impl.gpvar_recursion

__all__ = ["BACKEND", "subset_loglik_grad", "inclusion_probs", "gpvar_recursion"]
