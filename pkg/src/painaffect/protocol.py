"""Case studies, evaluation schemes and the experiment runner.

Cases
  CaseMinus1  train/test on BL, LLP, HLP only (affect-unaware model).
  Case0       the CaseMinus1 model, tested with affect windows present (label A).
  Case5       BL folded into A; classes LLP, HLP, A everywhere.
  Case6       BL removed; classes LLP, HLP, A; training balanced per class.

Schemes
  Known           stratified 70/30 sample-level split, 5 seeds.
  Unknown         15 held-out subjects per repeat, 5 repeats.
  PersonSpecific  stratified 70/30 split inside each subject, 5 seeds.
"""
from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .dataset import ContextFeatures, Corpus, RawState, TaskLabel, map_pain_levels
from .errors import PainAffectError, ParameterError, ProtocolError
from .learners import ClassifierSpec, fit, predict
from .metrics import confusion, f1_macro, per_class_scores, summarize
from .signal import Channel, PreprocessConfig, ordered_channels, preprocess

BL, LLP, HLP, A = TaskLabel.BL, TaskLabel.LLP, TaskLabel.HLP, TaskLabel.A
VALIDATION_FRACTION = 0.1
REPORT_SCHEMA = 1


class CaseId(str, Enum):
    CaseMinus1 = "-1"
    Case0 = "0"
    Case5 = "5"
    Case6 = "6"

    @classmethod
    def parse(cls, text) -> "CaseId":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("case", "").replace("minus", "-").strip("_ ")
        try:
            return cls(key)
        except ValueError:
            raise ParameterError(f"unknown case {text!r}; expected one of -1, 0, 5, 6") from None


# label universe used for scoring each case
CASE_CLASSES = {
    CaseId.CaseMinus1: (BL, LLP, HLP),
    CaseId.Case0: (BL, LLP, HLP, A),
    CaseId.Case5: (LLP, HLP, A),
    CaseId.Case6: (LLP, HLP, A),
}
# classes the model is trained on
TRAIN_CLASSES = {**CASE_CLASSES, CaseId.Case0: (BL, LLP, HLP)}


@dataclass(frozen=True)
class Known:
    train_fraction: float = 0.7
    n_seeds: int = 5
    name = "known"

    def __post_init__(self):
        _check_fraction(self.train_fraction)
        if self.n_seeds < 1:
            raise ParameterError("n_seeds must be >= 1")

    def as_dict(self):
        return {"name": self.name, "train_fraction": self.train_fraction, "n_seeds": self.n_seeds}


@dataclass(frozen=True)
class Unknown:
    held_out_subjects: int = 15
    n_repeats: int = 5
    name = "unknown"

    def __post_init__(self):
        if self.held_out_subjects < 1:
            raise ParameterError("held_out_subjects must be >= 1")
        if self.n_repeats < 1:
            raise ParameterError("n_repeats must be >= 1")

    def as_dict(self):
        return {"name": self.name, "held_out_subjects": self.held_out_subjects,
                "n_repeats": self.n_repeats}


@dataclass(frozen=True)
class PersonSpecific:
    train_fraction: float = 0.7
    n_seeds: int = 5
    name = "personal"

    def __post_init__(self):
        _check_fraction(self.train_fraction)
        if self.n_seeds < 1:
            raise ParameterError("n_seeds must be >= 1")

    def as_dict(self):
        return {"name": self.name, "train_fraction": self.train_fraction, "n_seeds": self.n_seeds}


SCHEMES = {"known": Known, "unknown": Unknown, "personal": PersonSpecific}


def parse_scheme(text) -> Known | Unknown | PersonSpecific:
    if isinstance(text, (Known, Unknown, PersonSpecific)):
        return text
    key = str(text).strip().lower().replace("-", "").replace("_", "")
    key = {"personspecific": "personal", "person": "personal"}.get(key, key)
    if key not in SCHEMES:
        raise ParameterError(f"unknown scheme {text!r}; expected known, unknown or personal")
    return SCHEMES[key]()


def _check_fraction(f):
    if not 0.0 < f < 1.0:
        raise ParameterError(f"train_fraction must be in (0, 1), got {f}")


@dataclass(frozen=True)
class ExperimentPlan:
    case: CaseId
    scheme: Known | Unknown | PersonSpecific
    modalities: tuple
    classifier: ClassifierSpec
    use_context: bool = False
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "case", CaseId.parse(self.case))
        object.__setattr__(self, "scheme", parse_scheme(self.scheme))
        object.__setattr__(self, "modalities", tuple(ordered_channels(self.modalities)))

    def as_dict(self) -> dict:
        spec = self.classifier.as_dict()
        spec.pop("seed")  # per-entry seeds are recorded in each entry
        return {"case": self.case.value, "scheme": self.scheme.as_dict(),
                "modalities": [m.value for m in self.modalities], "classifier": spec,
                "use_context": self.use_context, "preprocess": self.preprocess.as_dict(),
                "master_seed": self.master_seed}

    def config_hash(self, extra: dict | None = None) -> str:
        doc = self.as_dict()
        if extra:
            doc = {**doc, **extra}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


# ------------------------------------------------------------------ splits

@dataclass(frozen=True)
class Split:
    """Train and test window indices into ``corpus.windows`` (sorted)."""
    train: np.ndarray
    test: np.ndarray

    def keys(self, corpus: Corpus, part: str = "train") -> set:
        return {corpus.windows[i].key for i in getattr(self, part)}


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def _apportion(sizes: Sequence[int], fraction: float, total: int) -> list[int]:
    """Integer shares summing to ``total`` with each within 1 of size*fraction."""
    exact = [n * fraction for n in sizes]
    base = [min(n, math.floor(x)) for n, x in zip(sizes, exact)]
    remainder = total - sum(base)
    order = sorted(range(len(sizes)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order:
        if remainder <= 0:
            break
        if base[i] < sizes[i]:
            base[i] += 1
            remainder -= 1
    return base


def _stratified(indices: np.ndarray, labels: Sequence, fraction: float,
                rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    indices = np.asarray(indices, dtype=np.int64)
    labels = list(labels)
    groups = {}
    for i, lab in zip(indices, labels):
        groups.setdefault(lab, []).append(i)
    keys = [k for k in TaskLabel if k in groups]
    sizes = [len(groups[k]) for k in keys]
    total = math.floor(len(indices) * fraction + 0.5)
    shares = _apportion(sizes, fraction, total)
    first, second = [], []
    for key, share in zip(keys, shares):
        members = np.array(groups[key], dtype=np.int64)
        members = members[rng.permutation(members.size)]
        first.append(members[:share])
        second.append(members[share:])
    if not keys:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


def split_known(corpus: Corpus, train_fraction: float = 0.7, seed: int = 0) -> Split:
    """Random sample-level split, stratified by task label."""
    _check_fraction(train_fraction)
    if len(corpus) == 0:
        raise ParameterError("corpus is empty")
    train, test = _stratified(np.arange(len(corpus)), corpus.labels, train_fraction,
                              _rng(seed, 0x4B))
    return Split(train, test)


def split_unknown(corpus: Corpus, held_out: int = 15, repeat_index: int = 0,
                  master_seed: int = 0) -> Split:
    """All windows of ``held_out`` randomly drawn subjects form the test side."""
    subjects = corpus.subject_ids()
    if held_out >= len(subjects):
        raise ParameterError(f"held_out={held_out} must be smaller than the cohort "
                             f"({len(subjects)} subjects)")
    rng = _rng(master_seed, 0x55, repeat_index)
    chosen = {subjects[i] for i in rng.choice(len(subjects), size=held_out, replace=False)}
    is_test = np.array([w.subject_id in chosen for w in corpus.windows], dtype=bool)
    idx = np.arange(len(corpus))
    return Split(idx[~is_test], idx[is_test])


def split_personal(corpus: Corpus, subject_id: str, train_fraction: float = 0.7, seed: int = 0,
                   required: Iterable | None = None) -> Split:
    """Stratified split of one subject's windows."""
    _check_fraction(train_fraction)
    idx = np.array([i for i, w in enumerate(corpus.windows) if w.subject_id == subject_id],
                   dtype=np.int64)
    labels = [corpus.windows[i].label for i in idx]
    counts = Counter(labels)
    needed = list(counts) if required is None else list(required)
    short = [lab for lab in needed if counts.get(lab, 0) < 2]
    if short or idx.size == 0:
        names = ", ".join(getattr(s, "value", str(s)) for s in short) or "any"
        raise ProtocolError(f"subject {subject_id} has fewer than 2 samples for class(es) {names}")
    train, test = _stratified(idx, labels, train_fraction, _rng(seed, 0x50))
    return Split(train, test)


# ------------------------------------------------------------- case datasets

@dataclass(frozen=True)
class SampleSet:
    indices: np.ndarray
    labels: tuple

    def __len__(self):
        return self.indices.size

    def counts(self) -> dict:
        c = Counter(self.labels)
        return {lab.value: c[lab] for lab in TaskLabel if lab in c}

    def keys(self, corpus: Corpus) -> set:
        return {corpus.windows[i].key for i in self.indices}

    def labeled_keys(self, corpus: Corpus) -> set:
        return {(corpus.windows[i].key, lab) for i, lab in zip(self.indices, self.labels)}


def _sample_set(pairs) -> SampleSet:
    pairs = sorted(pairs, key=lambda p: p[0])
    return SampleSet(np.array([p[0] for p in pairs], dtype=np.int64), tuple(p[1] for p in pairs))


@dataclass(frozen=True)
class CaseDatasets:
    case: CaseId
    train: SampleSet
    validation: SampleSet
    test: SampleSet
    classes: tuple            # scoring label universe
    train_classes: tuple

    @property
    def class_manifest(self) -> dict:
        return {"train": self.train.counts(), "validation": self.validation.counts(),
                "test": self.test.counts()}


def case_label(state: RawState, case: CaseId, side: str):
    """Label of a window with ``state`` under ``case``; None drops it.

    ``side`` is "train" (also used for validation) or "test".
    """
    label = map_pain_levels(state)
    if case is CaseId.CaseMinus1:
        return None if label is A else label
    if case is CaseId.Case0:
        return None if (label is A and side == "train") else label
    if case is CaseId.Case5:
        return A if label is BL else label
    return None if label is BL else label  # Case6


def _labeled(corpus: Corpus, indices, case: CaseId, side: str) -> list:
    out = []
    for i in indices:
        lab = case_label(corpus.windows[i].raw_state, case, side)
        if lab is not None:
            out.append((int(i), lab))
    return out


def _subsample(pairs: list, target: dict, rng: np.random.Generator) -> list:
    """Keep ``target[label]`` randomly chosen pairs per label."""
    by_label = {}
    for p in pairs:
        by_label.setdefault(p[1], []).append(p)
    out = []
    for lab in TaskLabel:
        group = by_label.get(lab, [])
        if not group:
            continue
        keep = target[lab]
        if keep < len(group):
            chosen = np.sort(rng.choice(len(group), size=keep, replace=False))
            group = [group[j] for j in chosen]
        out.extend(group)
    return out


def build_case_datasets(corpus: Corpus, case, split: Split, seed: int = 0) -> CaseDatasets:
    """Train/validation/test sets for one case from a scheme split.

    10% of the split's training side (stratified) becomes the validation set.
    CaseMinus1, Case0 and Case5 training sets are subsampled to identical
    per-class counts, with BL in CaseMinus1/Case0 corresponding to A in Case5;
    Case6 training is subsampled to equal counts of LLP, HLP and A.
    """
    case = CaseId.parse(case)
    if np.intersect1d(split.train, split.test).size:
        raise ProtocolError("split train and test sides overlap")
    pool, val = _stratified(split.train, [corpus.windows[i].label for i in split.train],
                            1.0 - VALIDATION_FRACTION, _rng(seed, 0x56))

    if case is CaseId.Case6:
        train = _labeled(corpus, pool, case, "train")
        counts = Counter(lab for _, lab in train)
        n = min(counts.get(c, 0) for c in TRAIN_CLASSES[case])
        train = _subsample(train, {c: n for c in TRAIN_CLASSES[case]}, _rng(seed, 0x36))
    else:
        naive = Counter(lab for _, lab in _labeled(corpus, pool, CaseId.CaseMinus1, "train"))
        aware = Counter(lab for _, lab in _labeled(corpus, pool, CaseId.Case5, "train"))
        common = {
            LLP: min(naive[LLP], aware[LLP]),
            HLP: min(naive[HLP], aware[HLP]),
            BL: min(naive[BL], aware[A]),
        }
        common[A] = common[BL]
        train_case = CaseId.CaseMinus1 if case is CaseId.Case0 else case
        train = _subsample(_labeled(corpus, pool, train_case, "train"), common,
                           _rng(seed, 0x55, int(train_case is CaseId.Case5)))

    val_case = CaseId.CaseMinus1 if case is CaseId.Case0 else case
    data = CaseDatasets(case, _sample_set(train), _sample_set(_labeled(corpus, val, val_case, "train")),
                        _sample_set(_labeled(corpus, split.test, case, "test")),
                        CASE_CLASSES[case], TRAIN_CLASSES[case])
    for part in ("train", "test"):
        present = set(getattr(data, part).labels)
        wanted = data.train_classes if part == "train" else data.classes
        for cls in wanted:
            if cls not in present:
                raise ProtocolError(f"case {case.value}: class {cls.value} has no {part} samples")
    return data


# ---------------------------------------------------------------- features

class FeatureStore:
    """Lazily computed per-channel feature blocks for every window of a corpus."""

    def __init__(self, corpus: Corpus, config: PreprocessConfig, chunk: int = 512):
        self.corpus = corpus
        self.config = config
        self.chunk = chunk
        self._blocks: dict[Channel, np.ndarray] = {}
        self._context = None

    def block(self, channel: Channel) -> np.ndarray:
        channel = Channel(channel)
        if channel not in self._blocks:
            windows = self.corpus.windows
            parts = []
            for lo in range(0, len(windows), self.chunk):
                batch = windows[lo:lo + self.chunk]
                try:
                    raw = np.stack([w.channels[channel].samples for w in batch])
                except KeyError:
                    missing = next(w for w in batch if channel not in w.channels)
                    raise ProtocolError(f"window {missing.key} lacks channel {channel.value}") from None
                except ValueError:
                    raise ProtocolError(f"{channel.value} windows differ in length") from None
                parts.append(preprocess(raw, self.config))
            self._blocks[channel] = (np.concatenate(parts) if parts
                                     else np.zeros((0, 0)))
        return self._blocks[channel]

    def context(self) -> np.ndarray:
        if self._context is None:
            by_subject = {sid: ContextFeatures.for_subject(s).values
                          for sid, s in self.corpus.subjects.items()}
            self._context = np.array([by_subject[w.subject_id] for w in self.corpus.windows])
        return self._context

    def matrix(self, indices, modalities, use_context: bool = False) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        blocks = [self.block(c)[indices] for c in ordered_channels(modalities)]
        if use_context:
            blocks.append(self.context()[indices])
        return np.hstack(blocks)


# ---------------------------------------------------------------- experiment

@dataclass
class EvaluationReport:
    plan: dict
    entries: list
    aggregate: dict
    config_hash: str
    tool_version: str = __version__
    schema_version: int = REPORT_SCHEMA

    def to_dict(self) -> dict:
        return {"schema_version": self.schema_version, "tool_version": self.tool_version,
                "config_hash": self.config_hash, "plan": self.plan, "entries": self.entries,
                "aggregate": self.aggregate}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @property
    def f1_values(self) -> list[float]:
        return [e["f1_macro"] for e in self.entries]


def _score(data: CaseDatasets, y_pred) -> dict:
    m = confusion(list(data.test.labels), y_pred, data.classes)
    scores = per_class_scores(m)
    return {"confusion": m.to_dict(), "f1_macro": f1_macro(m),
            "per_class": {c.value: s for c, s in scores.items()},
            "class_manifest": data.class_manifest}


def evaluate_split(plan: ExperimentPlan, corpus: Corpus, split: Split, seed: int,
                   features: FeatureStore, n_jobs: int | None = None) -> dict:
    """Build case data, fit, predict, score; one report entry."""
    data = build_case_datasets(corpus, plan.case, split, seed)
    X_train = features.matrix(data.train.indices, plan.modalities, plan.use_context)
    X_test = features.matrix(data.test.indices, plan.modalities, plan.use_context)
    model = fit(plan.classifier.with_seed(seed), X_train, data.train.labels,
                classes=data.train_classes, n_jobs=n_jobs)
    return _score(data, predict(model, X_test))


def _coordinates(plan: ExperimentPlan, **unit) -> str:
    parts = [f"case={plan.case.value}", f"scheme={plan.scheme.name}",
             f"modalities={'+'.join(m.value for m in plan.modalities)}",
             f"classifier={plan.classifier.kind}"]
    parts += [f"{k}={v}" for k, v in unit.items()]
    return "[" + ", ".join(parts) + "]"


def run_experiment(plan: ExperimentPlan, corpus: Corpus, features: FeatureStore | None = None,
                   n_jobs: int | None = None, hash_extra: dict | None = None) -> EvaluationReport:
    """Run every seed/repeat/subject unit the plan's scheme calls for."""
    if features is None or features.corpus is not corpus or features.config != plan.preprocess:
        features = FeatureStore(corpus, plan.preprocess)
    scheme = plan.scheme
    entries = []

    def guarded(fn, **unit):
        try:
            return fn()
        except PainAffectError as exc:
            raise ProtocolError(f"{_coordinates(plan, **unit)} {exc}") from exc

    if isinstance(scheme, Known):
        for i in range(scheme.n_seeds):
            seed = plan.master_seed + i
            entry = guarded(lambda: evaluate_split(
                plan, corpus, split_known(corpus, scheme.train_fraction, seed), seed, features,
                n_jobs), seed=seed)
            entries.append({"seed": seed, **entry})
    elif isinstance(scheme, Unknown):
        for r in range(scheme.n_repeats):
            seed = plan.master_seed + r
            split = guarded(lambda: split_unknown(corpus, scheme.held_out_subjects, r,
                                                  plan.master_seed), repeat=r)
            held = sorted({corpus.windows[i].subject_id for i in split.test})
            entry = guarded(lambda: evaluate_split(plan, corpus, split, seed, features, n_jobs),
                            repeat=r)
            entries.append({"repeat": r, "seed": seed, "test_subjects": held, **entry})
    else:
        for i in range(scheme.n_seeds):
            seed = plan.master_seed + i
            per_subject, skipped = [], []
            for sid in corpus.subject_ids():
                try:
                    split = split_personal(corpus, sid, scheme.train_fraction, seed)
                    result = evaluate_split(plan, corpus, split, seed, features, n_jobs)
                except ProtocolError as exc:
                    skipped.append({"subject": sid, "reason": str(exc)})
                    continue
                except PainAffectError as exc:
                    raise ProtocolError(f"{_coordinates(plan, seed=seed, subject=sid)} {exc}") from exc
                per_subject.append({"subject": sid, **result})
            if not per_subject:
                raise ProtocolError(f"{_coordinates(plan, seed=seed)} no subject could be evaluated")
            summary = summarize([s["f1_macro"] for s in per_subject])
            entries.append({"seed": seed, "f1_macro": summary.mean, "subjects": per_subject,
                            "skipped": skipped})

    aggregate = summarize([e["f1_macro"] for e in entries]).to_dict()
    return EvaluationReport(plan.as_dict(), entries, aggregate, plan.config_hash(hash_extra))
