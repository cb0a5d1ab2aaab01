import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vpet.data import EmbeddingSet


@pytest.fixture
def blobs_2class():
    """Linearly separable 2-D blobs, 10 per class, margin comfortably >= 1."""
    rng = np.random.default_rng(7)
    a = rng.normal(0.0, 0.25, size=(10, 2)) + np.array([2.0, 0.0])
    b = rng.normal(0.0, 0.25, size=(10, 2)) + np.array([-2.0, 0.0])
    X = np.vstack([a, b])
    y = np.array([0] * 10 + [1] * 10, dtype=np.int64)
    return EmbeddingSet(features=X, class_count=2, labels=y)


def random_labeling(rng, n, c):
    return rng.integers(0, c, size=n).tolist()
