import numpy as np
import pytest

from spinpol.model import ModelParams, build_sector_basis, sample_realization


@pytest.fixture(scope="session")
def small_realization():
    """L=6 disordered realization used across modules."""
    params = ModelParams(size=6, omega_b=10.0, g_bar=0.1, gamma_xx=0.05,
                         gamma_z=0.05, seed=42)
    return sample_realization(params)


@pytest.fixture(scope="session")
def homogeneous_realization():
    params = ModelParams(size=6, omega_b=10.0, g_bar=0.1, gamma_xx=0.0,
                         gamma_z=0.0, seed=42)
    return sample_realization(params)


def random_columns(dim, n_cols, seed=0):
    rng = np.random.default_rng(seed)
    cols = rng.normal(size=(dim, n_cols)) + 1j * rng.normal(size=(dim, n_cols))
    return cols / np.linalg.norm(cols, axis=0)


@pytest.fixture(scope="session")
def sector_basis_cache():
    cache = {}

    def get(L, N):
        if (L, N) not in cache:
            cache[(L, N)] = build_sector_basis(L, N)
        return cache[(L, N)]

    return get
