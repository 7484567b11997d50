import numpy as np
import pytest

from graphscore import _kernels_py, kernels

BACKENDS = ["python"]
try:
    from graphscore import _kernels

    BACKENDS.append("cython")
except ImportError:
    _kernels = None


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test against each available kernel implementation."""
    impl = _kernels_py if request.param == "python" else _kernels
    for name in ("subset_loglik_grad", "inclusion_probs", "gpvar_recursion"):
        monkeypatch.setattr(kernels, name, getattr(impl, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
