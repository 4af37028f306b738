r"""Shared fixtures.

The letter tree used throughout:

        A
       / \
      B   C
     /|\  /|\
    3 4 5 6 7 8

Parsed from a name-table edge list, so ids follow sorted token order:
"3".."8" -> 0..5, "A" -> 6 (root), "B" -> 7, "C" -> 8.
"""

import numpy as np
import pytest

from taxrewire.corpus import Dataset, make_sparse
from taxrewire.simgraph import PairScore, SimilarPairSet
from taxrewire.taxonomy import parse_taxonomy

LETTER_EDGES = "A B\nA C\nB 3\nB 4\nB 5\nC 6\nC 7\nC 8\n"


@pytest.fixture
def letter_tree():
    return parse_taxonomy(LETTER_EDGES)


@pytest.fixture
def letter_ids(letter_tree):
    """name -> id shortcut for readable rewiring tests."""
    return {name: letter_tree.id_of(name) for name in "345678ABC"}


def pair_set(*pairs: tuple[int, int], tau: float = 0.5) -> SimilarPairSet:
    """Build a pair set from (a, b) tuples; scores descend from 0.9."""
    scored = []
    score = 0.9
    for a, b in pairs:
        lo, hi = (a, b) if a < b else (b, a)
        scored.append(PairScore(lo, hi, round(score, 6)))
        score -= 0.01
    return SimilarPairSet(scored, tau)


@pytest.fixture
def tiny_dataset():
    """Six instances over two classes with an obvious separating feature."""
    vectors = [
        make_sparse([1, 3], [1.0, 0.2]),
        make_sparse([1], [0.9]),
        make_sparse([1, 2], [1.1, 0.1]),
        make_sparse([2], [1.0]),
        make_sparse([2, 3], [0.8, 0.2]),
        make_sparse([2, 1], [1.2, 0.05]),
    ]
    labels = [0, 0, 0, 1, 1, 1]
    return Dataset(vectors, labels, 3)


def one_hot_dataset(leaves, per_leaf, dims=None, seed=0, jitter=0.0):
    """Each class gets its own indicator feature; trivially separable.

    Feature index of leaf ``l`` is its 1-based position in sorted order.
    Optional jitter adds small seeded off-feature noise.
    """
    leaves = sorted(leaves)
    dims = dims or len(leaves)
    rng = np.random.default_rng(seed)
    vectors, labels = [], []
    for pos, leaf in enumerate(leaves, start=1):
        for _ in range(per_leaf):
            idx, val = [pos], [1.0]
            if jitter:
                other = 1 + int(rng.integers(dims))
                if other != pos:
                    idx.append(other)
                    val.append(jitter * float(rng.uniform(0.1, 1.0)))
            vectors.append(make_sparse(idx, val))
            labels.append(leaf)
    return Dataset(vectors, labels, dims)
