import numpy as np
import pytest

from tumorkin import GridSpec, GrowthParams


@pytest.fixture
def grid201() -> GridSpec:
    return GridSpec(x_max=2.0, n_nodes=201)


@pytest.fixture
def gompertz_base() -> GrowthParams:
    return GrowthParams(mu=0.3, lam=0.0, delta=0.0, x_L=0.5, sigma2=0.0025)


@pytest.fixture
def vb_base() -> GrowthParams:
    return GrowthParams(mu=0.015, lam=0.0, delta=-0.25, x_L=7.716, sigma2=0.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260823)
