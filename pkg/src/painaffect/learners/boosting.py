"""Gradient-boosted regression trees with the multiclass softmax objective.

Each round fits one depth-limited tree per class to the gradient/Hessian of
the softmax cross-entropy (second-order leaf weights, L2 penalty 1, minimum
child Hessian 1), then adds ``learning_rate`` times its output to that class
score. Splits are exact: every midpoint between sorted distinct values is
considered.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._kernels import apply_tree, grow_newton_tree

REG_LAMBDA = 1.0
MIN_CHILD_WEIGHT = 1.0
MIN_GAIN = 1e-12


@dataclass(frozen=True)
class RegTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    weight: np.ndarray

    def predict(self, X) -> np.ndarray:
        return self.weight[apply_tree(X, self.feature, self.threshold, self.left, self.right)]


@dataclass(frozen=True)
class BoostState:
    rounds: tuple          # rounds[r][k] is the tree for class k in round r
    n_classes: int
    learning_rate: float
    train_loss: tuple      # mean training log-loss after each round


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_loss(scores: np.ndarray, codes: np.ndarray) -> float:
    z = scores - scores.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(log_norm - z[np.arange(codes.size), codes]))


def fit(X, codes, n_classes, n_rounds, learning_rate, max_depth, n_jobs=1) -> BoostState:
    X = np.ascontiguousarray(X, dtype=float)
    Xt = np.ascontiguousarray(X.T)
    sorted_idx = np.ascontiguousarray(np.argsort(Xt, axis=1, kind="stable"))
    sorted_vals = np.ascontiguousarray(np.take_along_axis(Xt, sorted_idx, axis=1))
    n = X.shape[0]
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), codes] = 1.0
    scores = np.zeros((n, n_classes))
    rounds, losses = [], []
    pool = ThreadPoolExecutor(n_jobs) if n_jobs > 1 else None

    def grow(k, prob):
        grad = np.ascontiguousarray(prob[:, k] - onehot[:, k])
        hess = np.ascontiguousarray(np.maximum(prob[:, k] * (1.0 - prob[:, k]), 1e-16))
        out = grow_newton_tree(Xt, sorted_idx, sorted_vals, grad, hess, max_depth, REG_LAMBDA,
                               MIN_CHILD_WEIGHT, MIN_GAIN)
        f, t, lft, rgt, w, _ = out
        return RegTree(f, t, lft, rgt, w * learning_rate)

    try:
        for _ in range(n_rounds):
            prob = softmax(scores)
            if pool is not None:
                trees = list(pool.map(lambda k: grow(k, prob), range(n_classes)))
            else:
                trees = [grow(k, prob) for k in range(n_classes)]
            for k, tree in enumerate(trees):
                scores[:, k] += tree.predict(X)
            rounds.append(tuple(trees))
            losses.append(log_loss(scores, codes))
    finally:
        if pool is not None:
            pool.shutdown()
    return BoostState(tuple(rounds), n_classes, float(learning_rate), tuple(losses))


def decision_scores(state: BoostState, X, n_rounds: int | None = None) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=float)
    scores = np.zeros((X.shape[0], state.n_classes))
    for trees in state.rounds[:n_rounds]:
        for k, tree in enumerate(trees):
            scores[:, k] += tree.predict(X)
    return scores


def predict(state: BoostState, X) -> np.ndarray:
    return np.argmax(decision_scores(state, X), axis=1)


def to_json(state: BoostState) -> dict:
    return {"n_classes": state.n_classes, "learning_rate": state.learning_rate,
            "train_loss": list(state.train_loss),
            "rounds": [[{"feature": t.feature.tolist(), "threshold": t.threshold.tolist(),
                         "left": t.left.tolist(), "right": t.right.tolist(),
                         "weight": t.weight.tolist()} for t in trees] for trees in state.rounds]}


def from_json(body: dict) -> BoostState:
    rounds = tuple(tuple(RegTree(np.array(t["feature"], np.int32), np.array(t["threshold"], float),
                                 np.array(t["left"], np.int32), np.array(t["right"], np.int32),
                                 np.array(t["weight"], float)) for t in trees)
                   for trees in body["rounds"])
    return BoostState(rounds, int(body["n_classes"]), float(body["learning_rate"]),
                      tuple(body["train_loss"]))
