import numpy as np
import pytest

from ratingsynth.dataset import RatingDataset


@pytest.fixture
def tiny_ds():
    """2 users x 2 items, 3 cells."""
    return RatingDataset({("u1", "i1"): 5, ("u1", "i2"): 3, ("u2", "i1"): 4})


def random_dataset(n_users, n_items, density, seed, scale=(1, 2, 3, 4, 5)):
    """Uniform random dataset where every user rates at least one item."""
    rng = np.random.default_rng(seed)
    ratings = {}
    users = [f"u{k:04d}" for k in range(n_users)]
    items = [f"i{k:04d}" for k in range(n_items)]
    for u in users:
        n = max(1, rng.binomial(n_items, density))
        for j in rng.choice(n_items, size=n, replace=False):
            ratings[(u, items[j])] = scale[rng.integers(len(scale))]
    return RatingDataset(ratings, scale)


@pytest.fixture(scope="session")
def mid_ds():
    """Mid-size random corpus reused by synthesis property tests."""
    return random_dataset(60, 40, 0.25, seed=11)
