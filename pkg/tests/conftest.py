import numpy as np
import pytest

from spikelab.profile import Parameters, solve_ground_state


@pytest.fixture(scope="session")
def profile_cache():
    """Session cache of ground-state solves keyed by (n, p, r_max, grid_step)."""
    cache = {}

    def get(n, p, r_max=30.0, grid_step=1e-3):
        key = (n, float(p), float(r_max), float(grid_step))
        if key not in cache:
            cache[key] = solve_ground_state(Parameters(n, p), r_max=r_max, grid_step=grid_step)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def townes(profile_cache):
    """The n=2, p=4 ground state used by most reduction and pde tests."""
    return profile_cache(2, 4.0)


def assert_close(actual, expected, rtol=0.0, atol=0.0, label=""):
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    err = np.max(np.abs(actual - expected))
    bound = atol + rtol * np.max(np.abs(expected))
    assert err <= bound, f"{label}: |err|={err:.3e} exceeds bound {bound:.3e}"
