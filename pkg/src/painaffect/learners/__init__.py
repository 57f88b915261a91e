"""Classifier contract: a spec, ``fit`` and ``predict``.

Three kinds are available: ``KNN`` (k nearest neighbours), ``RF`` (random
forest) and ``GBT`` (gradient-boosted trees, softmax objective). Defaults are
k=5, 750 forest trees, 750 boosting rounds at learning rate 0.1.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, replace
from typing import Any, Sequence

import numpy as np

from ..dataset import TaskLabel
from ..errors import ParameterError
from . import boosting, forest, knn

KINDS = ("KNN", "RF", "GBT")
_ALIASES = {"XGB": "GBT", "XGBOOST": "GBT", "GB": "GBT", "FOREST": "RF"}
THREADS_ENV = "PAINAFFECT_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    knn_k: int = 5
    rf_trees: int = 750
    gbt_rounds: int = 750
    gbt_learning_rate: float = 0.1
    gbt_max_depth: int = 6
    seed: int = 0

    def __post_init__(self):
        kind = str(self.kind).upper()
        kind = _ALIASES.get(kind, kind)
        if kind not in KINDS:
            raise ParameterError(f"unknown classifier kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        for name in ("knn_k", "rf_trees", "gbt_rounds", "gbt_max_depth"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be a positive integer")
        if not self.gbt_learning_rate > 0:
            raise ParameterError("gbt_learning_rate must be positive")

    def with_seed(self, seed: int) -> "ClassifierSpec":
        return replace(self, seed=int(seed))

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrainedModel:
    spec: ClassifierSpec
    classes: tuple
    n_features: int
    state: Any = None   # None means constant predictor (single training class)


def _class_order(y, classes):
    if classes is not None:
        classes = tuple(classes)
        if len(set(classes)) != len(classes):
            raise ParameterError("classes contains duplicates")
        extra = set(y) - set(classes)
        if extra:
            raise ParameterError(f"labels {sorted(map(str, extra))} not in classes")
        return classes
    present = set(y)
    if all(isinstance(v, TaskLabel) for v in present):
        return tuple(lab for lab in TaskLabel if lab in present)
    return tuple(sorted(present))


def _check_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ParameterError(f"feature matrix must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ParameterError("feature matrix contains non-finite values")
    return np.ascontiguousarray(X)


def fit(spec: ClassifierSpec, X, y: Sequence, classes: Sequence | None = None,
        n_jobs: int | None = None) -> TrainedModel:
    """Train ``spec`` on rows ``X`` with labels ``y``.

    ``classes`` fixes the class order used for tie-breaking; by default it is
    the canonical task-label order (or sorted order for other label types).
    """
    X = _check_matrix(X)
    y = list(y)
    if X.shape[0] == 0 or len(y) == 0:
        raise ParameterError("cannot fit on empty data")
    if X.shape[0] != len(y):
        raise ParameterError(f"{X.shape[0]} rows but {len(y)} labels")
    order = _class_order(y, classes)
    code = {c: i for i, c in enumerate(order)}
    codes = np.array([code[v] for v in y], dtype=np.int64)
    n_jobs = default_threads() if n_jobs is None else max(1, int(n_jobs))
    if len(set(codes.tolist())) == 1:
        return TrainedModel(spec, order, X.shape[1], ("constant", int(codes[0])))
    if spec.kind == "KNN":
        state = knn.fit(X, codes, len(order), spec.knn_k)
    elif spec.kind == "RF":
        state = forest.fit(X, codes, len(order), spec.rf_trees, spec.seed, n_jobs=n_jobs)
    else:
        state = boosting.fit(X, codes, len(order), spec.gbt_rounds, spec.gbt_learning_rate,
                             spec.gbt_max_depth, n_jobs=n_jobs)
    return TrainedModel(spec, order, X.shape[1], state)


def predict_codes(model: TrainedModel, X) -> np.ndarray:
    X = _check_matrix(X)
    if X.shape[1] != model.n_features:
        raise ParameterError(f"model expects {model.n_features} features, got {X.shape[1]}")
    state = model.state
    if isinstance(state, tuple) and state[0] == "constant":
        return np.full(X.shape[0], state[1], dtype=np.int64)
    module = {"KNN": knn, "RF": forest, "GBT": boosting}[model.spec.kind]
    return module.predict(state, X)


def predict(model: TrainedModel, X) -> list:
    """Predicted labels (drawn from ``model.classes``) for each row of ``X``."""
    return [model.classes[c] for c in predict_codes(model, X)]


# -------------------------------------------------------------- serialization

def _label_to_json(c):
    if isinstance(c, TaskLabel):
        return {"task_label": c.value}
    if isinstance(c, (np.integer, int)):
        return int(c)
    return c


def _label_from_json(c):
    return TaskLabel(c["task_label"]) if isinstance(c, dict) else c


def dumps_model(model: TrainedModel) -> str:
    """Self-describing JSON blob; :func:`loads_model` restores an equivalent model."""
    state = model.state
    if isinstance(state, tuple) and state[0] == "constant":
        body = {"constant": state[1]}
    else:
        module = {"KNN": knn, "RF": forest, "GBT": boosting}[model.spec.kind]
        body = module.to_json(state)
    return json.dumps({"format": "painaffect-model", "version": 1, "spec": model.spec.as_dict(),
                       "classes": [_label_to_json(c) for c in model.classes],
                       "n_features": model.n_features, "state": body}, sort_keys=True)


def loads_model(blob: str) -> TrainedModel:
    doc = json.loads(blob)
    if doc.get("format") != "painaffect-model":
        raise ParameterError("not a serialized model")
    spec = ClassifierSpec(**doc["spec"])
    body = doc["state"]
    if "constant" in body:
        state = ("constant", int(body["constant"]))
    else:
        module = {"KNN": knn, "RF": forest, "GBT": boosting}[spec.kind]
        state = module.from_json(body)
    return TrainedModel(spec, tuple(_label_from_json(c) for c in doc["classes"]),
                        int(doc["n_features"]), state)


__all__ = ["ClassifierSpec", "TrainedModel", "fit", "predict", "predict_codes",
           "dumps_model", "loads_model", "KINDS", "default_threads"]
