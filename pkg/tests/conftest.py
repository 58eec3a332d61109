import numpy as np
import pytest


def unit_nonneg(rng, dim):
    """Random unit-norm vector with non-negative entries (float32, like stored features)."""
    v = rng.random(dim)
    v /= np.linalg.norm(v)
    return v.astype(np.float32).astype(np.float64)


def random_viewsets(rng, n_shapes, n_views, dim):
    """Stacked random unit non-negative view matrices, one per shape."""
    return [
        np.stack([unit_nonneg(rng, dim) for _ in range(n_views)]) for _ in range(n_shapes)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
