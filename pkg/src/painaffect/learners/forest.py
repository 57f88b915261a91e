"""Random forest: bootstrap samples, Gini splits on sqrt(d) random features,
fully grown trees, plurality vote."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._kernels import apply_tree, grow_gini_tree


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_class: np.ndarray

    def predict(self, X) -> np.ndarray:
        leaves = apply_tree(X, self.feature, self.threshold, self.left, self.right)
        return self.leaf_class[leaves]


@dataclass(frozen=True)
class ForestState:
    trees: tuple
    n_classes: int


def tree_stream(seed: int, index: int) -> np.random.Generator:
    """Independent RNG for tree ``index``; the same for any thread layout."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(index,)))


def max_features_for(d: int) -> int:
    return max(1, int(math.sqrt(d)))


def _grow(Xt, codes, n_classes, seed, index) -> Tree:
    rng = tree_stream(seed, index)
    n = codes.shape[0]
    sample = rng.integers(0, n, size=n)
    split_seed = int(rng.integers(0, 2**63 - 1))
    out = grow_gini_tree(Xt, codes, sample, n_classes, max_features_for(Xt.shape[0]), split_seed)
    return Tree(*out[:5])


def fit(X, codes, n_classes, n_trees, seed, n_jobs=1) -> ForestState:
    Xt = np.ascontiguousarray(X.T)
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            trees = list(pool.map(lambda t: _grow(Xt, codes, n_classes, seed, t), range(n_trees)))
    else:
        trees = [_grow(Xt, codes, n_classes, seed, t) for t in range(n_trees)]
    return ForestState(tuple(trees), n_classes)


def vote_counts(state: ForestState, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=float)
    counts = np.zeros((X.shape[0], state.n_classes), dtype=np.int64)
    rows = np.arange(X.shape[0])
    for tree in state.trees:
        counts[rows, tree.predict(X)] += 1
    return counts


def predict(state: ForestState, X) -> np.ndarray:
    # argmax returns the first maximum, i.e. ties go to the earlier class
    return np.argmax(vote_counts(state, X), axis=1)


def to_json(state: ForestState) -> dict:
    return {"n_classes": state.n_classes,
            "trees": [{"feature": t.feature.tolist(), "threshold": t.threshold.tolist(),
                       "left": t.left.tolist(), "right": t.right.tolist(),
                       "leaf_class": t.leaf_class.tolist()} for t in state.trees]}


def from_json(body: dict) -> ForestState:
    trees = tuple(Tree(np.array(t["feature"], np.int32), np.array(t["threshold"], float),
                       np.array(t["left"], np.int32), np.array(t["right"], np.int32),
                       np.array(t["leaf_class"], np.int32)) for t in body["trees"])
    return ForestState(trees, int(body["n_classes"]))
