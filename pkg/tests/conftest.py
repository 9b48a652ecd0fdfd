import numpy as np
import pytest

from plsprobit import Dataset, select_bandwidth
from plsprobit.simulate import ScenarioConfig, generate_scenario


@pytest.fixture(scope="session")
def case2_small():
    """A 60-observation Case-2 draw with its weight matrix and bandwidth."""
    cfg = ScenarioConfig(case=2, lambda_true=0.2, n=60, reps=1, grid_side=20, seed=11)
    data, W = generate_scenario(cfg, 0)
    return data, W, select_bandwidth(data)


@pytest.fixture(scope="session")
def case2_medium():
    """A 200-observation Case-2 draw (the scale the estimator targets)."""
    cfg = ScenarioConfig(case=2, lambda_true=0.2, n=200, reps=1, seed=7)
    data, W = generate_scenario(cfg, 0)
    return data, W, select_bandwidth(data)


def toy_dataset(y, x=None, z=None):
    """Tiny Dataset with distinct dummy coordinates."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    x = np.zeros((n, 1)) if x is None else np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    z = np.zeros(n) if z is None else np.asarray(z, dtype=float)
    coords = np.column_stack([np.arange(n, dtype=float), np.zeros(n)])
    return Dataset(y=y, x=x, z=z, coords=coords)
