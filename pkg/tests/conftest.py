import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cfar.forest import Forest, from_linkage
from cfar.treegen import LinkageTree


def build_pair_trees() -> Forest:
    """The interlocking 5-unit pair of trees used throughout the tests.

    tree A: ((0,(1,2)),(3,4))      nodes: {1,2} {0,1,2} {3,4} root
    tree B: ((((0,2),3),1),4)      nodes: {0,2} {0,2,3} {0,1,2,3} root

    Ground truth {0,2},{1},{3,4} is realizable: {0,2} in B, {3,4} in A.
    """
    tree_a = from_linkage(
        LinkageTree(
            5,
            [
                (1, 2, 1.0, 2),  # 5 = {1,2}
                (3, 4, 1.0, 2),  # 6 = {3,4}
                (0, 5, 2.0, 3),  # 7 = {0,1,2}
                (6, 7, 3.0, 5),  # 8 = root
            ],
        ),
        tag="A",
    )
    tree_b = from_linkage(
        LinkageTree(
            5,
            [
                (0, 2, 1.0, 2),  # 5 = {0,2}
                (3, 5, 2.0, 3),  # 6 = {0,2,3}
                (1, 6, 3.0, 4),  # 7 = {0,1,2,3}
                (4, 7, 4.0, 5),  # 8 = root
            ],
        ),
        tag="B",
    )
    return Forest([tree_a, tree_b], 5)


PAIR_TRUTH = np.array([0, 1, 0, 2, 2])  # blocks {0,2}, {1}, {3,4}


@pytest.fixture
def pair_forest() -> Forest:
    return build_pair_trees()


@pytest.fixture
def pair_truth() -> np.ndarray:
    return PAIR_TRUTH.copy()


def random_tree(rng: np.random.Generator, n: int, tag: str = "rnd"):
    """Uniform-ish random binary tree over n leaves via random merges."""
    roots = [(i, 1) for i in range(n)]
    merges = []
    next_id = n
    while len(roots) > 1:
        i, j = sorted(rng.choice(len(roots), size=2, replace=False))
        (a, asz) = roots[i]
        (b, bsz) = roots[j]
        merges.append((a, b, float(len(merges) + 1), asz + bsz))
        roots = [r for idx, r in enumerate(roots) if idx not in (i, j)]
        roots.append((next_id, asz + bsz))
        next_id += 1
    return from_linkage(LinkageTree(n, merges), tag=tag)
