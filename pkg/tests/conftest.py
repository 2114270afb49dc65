import numpy as np
import pytest

from decal import _kernels
from decal.mathcore import cholesky


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT-compile (or load from cache) the hot kernels once so individual
    # tests measure math, not compilation.
    _kernels.warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_spd(rng, n, scale=1.0):
    a = rng.standard_normal((n, n))
    return scale * (a @ a.T + n * np.eye(n))


def gp_draw(rng, kernel, X, noise_var):
    """Sample a latent function and noisy outcomes from a GP prior."""
    f = cholesky(kernel.gram(X)).lower @ rng.standard_normal(X.shape[0])
    return f, f + np.sqrt(noise_var) * rng.standard_normal(X.shape[0])
