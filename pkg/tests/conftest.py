import numpy as np
import pytest

from retrospect.kernels import _numpy as numpy_kernels

try:
    from retrospect.kernels import _numba as numba_kernels
except ImportError:
    numba_kernels = None

BACKENDS = [("numpy", numpy_kernels)]
if numba_kernels is not None:
    BACKENDS.append(("numba", numba_kernels))


@pytest.fixture(params=BACKENDS, ids=[name for name, _ in BACKENDS])
def kernel_impl(request):
    return request.param[1]


@pytest.fixture
def rng():
    return np.random.default_rng(0)
