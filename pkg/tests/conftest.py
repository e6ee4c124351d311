import numpy as np
import pytest

from rrseg.series import RRSeries


@pytest.fixture
def step_series():
    """Two clean levels with a single changepoint at index 300."""
    rng = np.random.default_rng(42)
    x = np.concatenate([rng.normal(0.8, 0.02, 300), rng.normal(1.1, 0.02, 300)])
    return RRSeries(intervals=x, truth=[300])


def make_random_series(rng, n, truth=False):
    x = rng.uniform(0.5, 1.5, n)
    if not truth:
        return RRSeries(intervals=x)
    k = int(rng.integers(0, max(n // 10, 2)))
    idx = sorted(rng.choice(np.arange(1, n), size=k, replace=False).tolist()) if k else []
    return RRSeries(intervals=x, truth=idx)
