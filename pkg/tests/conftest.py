import os
import numpy as np
import pytest

from cardsvm import Dataset

DATA_DIR_ENV = "CARDSVM_DATA_DIR"


@pytest.fixture
def sparse2():
    """Two symmetric points separated by feature 0 only."""
    return Dataset([[1.0, 0.0], [-1.0, 0.0]], [1, -1], provenance=dict(source="sparse2"))

@pytest.fixture
def dense2():
    """Two symmetric points where both features carry the same signal."""
    return Dataset([[1.0, 1.0], [-1.0, -1.0]], [1, -1], provenance=dict(source="dense2"))

@pytest.fixture
def doubled4():
    return Dataset([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0], [-1.0, 0.0]], [1, -1, 1, -1],
        provenance=dict(source="doubled4"))

def random_instance(seed, m=24, n=5, informative=2, noise=0.6):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(m, n))
    w = np.zeros(n)
    w[:informative] = rng.uniform(1.0, 2.0, size=informative) * rng.choice([-1.0, 1.0], size=informative)
    y = np.where(X @ w + noise * rng.normal(size=m) >= 0, 1.0, -1.0)
    y[0], y[1] = 1.0, -1.0
    return Dataset(X, y, provenance=dict(source=f"random{seed}"))

@pytest.fixture(params=[1, 2, 3])
def random_small(request):
    return random_instance(request.param)

def dataset_path(name):
    base = os.environ.get(DATA_DIR_ENV)
    if not base:
        pytest.skip(f"{DATA_DIR_ENV} is not set")
    path = os.path.join(base, name)
    if not os.path.isfile(path):
        pytest.skip(f"{path} not found")
    return path
