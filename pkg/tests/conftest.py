import numpy as np
import pytest

from sketchprecond import kernels


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _backends():
    out = ["python"]
    try:
        kernels.get_backend("cython")
        out.append("cython")
    except ImportError:
        pass
    return out


BACKENDS = _backends()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return kernels.get_backend(request.param)
