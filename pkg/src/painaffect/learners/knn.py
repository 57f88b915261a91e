"""Brute-force k-nearest-neighbour classifier."""
from dataclasses import dataclass

import numpy as np

from ._kernels import knn_vote


@dataclass(frozen=True)
class KNNState:
    X: np.ndarray
    y: np.ndarray
    n_classes: int
    k: int


def fit(X, codes, n_classes, k) -> KNNState:
    return KNNState(np.array(X, dtype=float), np.array(codes, dtype=np.int64), n_classes, int(k))


def predict(state: KNNState, X) -> np.ndarray:
    return knn_vote(state.X, state.y, np.ascontiguousarray(X, dtype=float), state.k,
                    state.n_classes)


def to_json(state: KNNState) -> dict:
    return {"X": state.X.tolist(), "y": state.y.tolist(), "n_classes": state.n_classes,
            "k": state.k}


def from_json(body: dict) -> KNNState:
    X = np.array(body["X"], dtype=float).reshape(len(body["y"]), -1)
    return KNNState(X, np.array(body["y"], dtype=np.int64), int(body["n_classes"]),
                    int(body["k"]))
