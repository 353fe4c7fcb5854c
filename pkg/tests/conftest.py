import numpy as np
import pytest

from rfmanifold import ForestConfig, fit_forest, synthesize_blobs, zscore_normalize
from rfmanifold.forest import Forest, Tree


@pytest.fixture(scope="session")
def blobs():
    return synthesize_blobs(50, 2, 2, 5.0, seed=1)


@pytest.fixture(scope="session")
def blobs_forest(blobs):
    return fit_forest(blobs, ForestConfig(n_trees=100, seed=0))


def make_stub_forest(leaf_of, inbag_counts, task="classification", n_classes=2):
    """Forest with fabricated bookkeeping arrays for hand-counted proximity
    tests; tree structures are placeholders and must not be routed through."""
    leaf_of = np.asarray(leaf_of, dtype=np.int32)
    inbag_counts = np.asarray(inbag_counts, dtype=np.int64)
    n, n_trees = leaf_of.shape
    trees = []
    for t in range(n_trees):
        size = int(leaf_of[:, t].max()) + 1
        trees.append(
            Tree(
                feature=np.full(size, -1, dtype=np.int32),
                threshold=np.zeros(size),
                left=np.full(size, -1, dtype=np.int32),
                right=np.full(size, -1, dtype=np.int32),
            )
        )
    return Forest(
        config=ForestConfig(n_trees=n_trees, mtry=1, min_leaf=1, seed=0, task=task),
        trees=trees,
        inbag_counts=inbag_counts,
        leaf_of=leaf_of,
        n_features=1,
        n_classes=n_classes if task == "classification" else 0,
    )
