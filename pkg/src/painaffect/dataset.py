"""Subjects, signal windows, labels and the on-disk corpus format.

Corpus layout::

    <root>/manifest.jsonl          one JSON object per window
    <root>/<subject_id>/<window_id>_<CHANNEL>.csv

Signal files hold one decimal value per LF-terminated line, no header.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import CorpusError, DataError, ParameterError
from .signal import CHANNEL_ORDER, Channel, RawTrace

WINDOW_SECONDS = 5.5
MIN_AGE, MAX_AGE = 20, 65


class Gender(str, Enum):
    Female = "Female"
    Male = "Male"


class RawState(str, Enum):
    BL = "BL"
    PL1 = "PL1"
    PL2 = "PL2"
    PL3 = "PL3"
    PL4 = "PL4"
    Amusement = "Amusement"
    Anger = "Anger"
    Disgust = "Disgust"
    Fear = "Fear"
    Sadness = "Sadness"


class TaskLabel(str, Enum):
    # declaration order is the canonical class order used everywhere
    BL = "BL"
    LLP = "LLP"
    HLP = "HLP"
    A = "A"


AFFECT_STATES = (RawState.Amusement, RawState.Anger, RawState.Disgust, RawState.Fear,
                 RawState.Sadness)
PAIN_STATES = (RawState.PL1, RawState.PL2, RawState.PL3, RawState.PL4)

_LABEL_TABLE = {
    RawState.BL: TaskLabel.BL,
    RawState.PL1: TaskLabel.LLP,
    RawState.PL2: TaskLabel.LLP,
    RawState.PL3: TaskLabel.HLP,
    RawState.PL4: TaskLabel.HLP,
    **{s: TaskLabel.A for s in AFFECT_STATES},
}


def map_pain_levels(state) -> TaskLabel:
    """Collapse a recorded state onto the four task categories."""
    return _LABEL_TABLE[RawState(state)]


def label_order(labels: Iterable) -> list[TaskLabel]:
    """Sort task labels into canonical order, dropping duplicates."""
    present = {TaskLabel(x) for x in labels}
    return [lab for lab in TaskLabel if lab in present]


class DemographicGroup(str, Enum):
    F1 = "F1"
    F2 = "F2"
    F3 = "F3"
    M4 = "M4"
    M5 = "M5"
    M6 = "M6"


def assign_demographic_group(gender, age: float) -> DemographicGroup:
    """Gender x age bin [20,30), [30,50), [50,65]; the top bin includes 65."""
    gender = Gender(gender)
    if not MIN_AGE <= age <= MAX_AGE:
        raise ParameterError(f"age {age} outside [{MIN_AGE}, {MAX_AGE}]")
    bin_index = 0 if age < 30 else 1 if age < 50 else 2
    groups = ((DemographicGroup.F1, DemographicGroup.F2, DemographicGroup.F3)
              if gender is Gender.Female else
              (DemographicGroup.M4, DemographicGroup.M5, DemographicGroup.M6))
    return groups[bin_index]


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    age: float
    gender: Gender
    pain_responder: bool = True

    def __post_init__(self):
        object.__setattr__(self, "gender", Gender(self.gender))
        object.__setattr__(self, "pain_responder", bool(self.pain_responder))

    @property
    def group(self) -> DemographicGroup:
        return assign_demographic_group(self.gender, self.age)


@dataclass(frozen=True)
class ContextFeatures:
    gender_code: int
    age_normalized: float
    group_onehot: tuple

    N_FEATURES = 2 + len(DemographicGroup)

    @classmethod
    def for_subject(cls, subject: SubjectRecord) -> "ContextFeatures":
        group = assign_demographic_group(subject.gender, subject.age)
        onehot = tuple(int(g is group) for g in DemographicGroup)
        return cls(gender_code=int(subject.gender is Gender.Male),
                   age_normalized=(subject.age - MIN_AGE) / (MAX_AGE - MIN_AGE),
                   group_onehot=onehot)

    @property
    def values(self) -> np.ndarray:
        return np.array([self.gender_code, self.age_normalized, *self.group_onehot], dtype=float)


def window_samples(sample_rate: int, seconds: float = WINDOW_SECONDS) -> int:
    return int(round(seconds * sample_rate))


@dataclass(frozen=True)
class SignalWindow:
    subject_id: str
    window_id: str
    raw_state: RawState
    channels: Mapping[Channel, RawTrace]
    duration: float = WINDOW_SECONDS

    def __post_init__(self):
        object.__setattr__(self, "raw_state", RawState(self.raw_state))
        channels = {Channel(k): v for k, v in self.channels.items()}
        if not channels:
            raise DataError(f"window {self.window_id} has no channels")
        rates = {t.sample_rate for t in channels.values()}
        lengths = {len(t) for t in channels.values()}
        if len(rates) != 1 or len(lengths) != 1:
            raise DataError(f"window {self.window_id}: channels disagree on rate or length")
        rate, n = rates.pop(), lengths.pop()
        if n != window_samples(rate, self.duration):
            raise DataError(f"window {self.window_id}: {n} samples at {rate}/s is not "
                            f"{self.duration} s")
        object.__setattr__(self, "channels",
                           {c: channels[c] for c in CHANNEL_ORDER if c in channels})

    @property
    def label(self) -> TaskLabel:
        return map_pain_levels(self.raw_state)

    @property
    def sample_rate(self) -> int:
        return next(iter(self.channels.values())).sample_rate

    @property
    def key(self) -> tuple[str, str]:
        return (self.subject_id, self.window_id)

    def __eq__(self, other):
        if not isinstance(other, SignalWindow):
            return NotImplemented
        return (self.key == other.key and self.raw_state == other.raw_state
                and self.duration == other.duration and self.channels == other.channels)

    __hash__ = None


@dataclass
class Corpus:
    """Subjects plus their signal windows, kept in canonical order."""
    subjects: dict[str, SubjectRecord]
    windows: list[SignalWindow] = field(default_factory=list)

    def __post_init__(self):
        if not isinstance(self.subjects, dict):
            self.subjects = {s.subject_id: s for s in self.subjects}
        self.subjects = dict(sorted(self.subjects.items()))
        state_rank = {s: i for i, s in enumerate(RawState)}
        self.windows = sorted(self.windows, key=lambda w: (w.subject_id,
                                                           state_rank[w.raw_state], w.window_id))
        seen = set()
        for w in self.windows:
            if w.subject_id not in self.subjects:
                raise DataError(f"window {w.window_id} references unknown subject {w.subject_id}")
            if w.key in seen:
                raise DataError(f"duplicate window {w.key}")
            seen.add(w.key)

    def __eq__(self, other):
        if not isinstance(other, Corpus):
            return NotImplemented
        return self.subjects == other.subjects and self.windows == other.windows

    def __len__(self):
        return len(self.windows)

    @property
    def labels(self) -> list[TaskLabel]:
        return [w.label for w in self.windows]

    def subject_ids(self) -> list[str]:
        return list(self.subjects)

    def windows_for(self, subject_id: str) -> list[SignalWindow]:
        return [w for w in self.windows if w.subject_id == subject_id]

    def restrict(self, subject_ids: Iterable[str]) -> "Corpus":
        keep = set(subject_ids)
        return Corpus({k: v for k, v in self.subjects.items() if k in keep},
                      [w for w in self.windows if w.subject_id in keep])


def _subject_key(item) -> str:
    return getattr(item, "subject_id", item)


def merge_datasets(pain_subjects: Iterable, emotion_subjects: Iterable,
                   non_responders: Iterable = ()) -> list[str]:
    """Subjects present in both source datasets minus known non-responders, sorted."""
    pain = {_subject_key(s) for s in pain_subjects}
    emotion = {_subject_key(s) for s in emotion_subjects}
    excluded = {_subject_key(s) for s in non_responders}
    return sorted((pain & emotion) - excluded)


def curate_corpus(corpus: Corpus, pain_subjects: Iterable | None = None,
                  emotion_subjects: Iterable | None = None,
                  non_responders: Iterable | None = None) -> Corpus:
    """Apply the merge/filter rules to a corpus.

    Missing source lists default to "every subject in the corpus"; missing
    non-responder lists default to subjects flagged ``pain_responder=False``.
    """
    everyone = list(corpus.subjects)
    if non_responders is None:
        non_responders = [s.subject_id for s in corpus.subjects.values() if not s.pain_responder]
    keep = merge_datasets(everyone if pain_subjects is None else pain_subjects,
                          everyone if emotion_subjects is None else emotion_subjects,
                          non_responders)
    return corpus.restrict(keep)


def extract_windows(recording: Mapping[Channel, RawTrace], subject_id: str, raw_state,
                    window_seconds: float = WINDOW_SECONDS, stride_seconds: float | None = None,
                    id_prefix: str | None = None, start_index: int = 0) -> list[SignalWindow]:
    """Cut a multichannel recording into fixed-length windows aligned to its start.

    Windows never extend past the end of the recording; the default stride
    equals the window length (no overlap).
    """
    if not recording:
        raise DataError("recording has no channels")
    if stride_seconds is None:
        stride_seconds = window_seconds
    if stride_seconds <= 0 or window_seconds <= 0:
        raise ParameterError("window and stride must be positive")
    traces = {Channel(k): v for k, v in recording.items()}
    rates = {t.sample_rate for t in traces.values()}
    lengths = {len(t) for t in traces.values()}
    if len(rates) != 1 or len(lengths) != 1:
        raise DataError(f"{subject_id}/{RawState(raw_state).value}: channel length or rate mismatch")
    rate, length = rates.pop(), lengths.pop()
    n_win = window_samples(rate, window_seconds)
    n_stride = max(1, window_samples(rate, stride_seconds))
    if length < n_win:
        return []
    count = (length - n_win) // n_stride + 1
    prefix = id_prefix or RawState(raw_state).value
    out = []
    for i in range(count):
        lo = i * n_stride
        chans = {c: t.replace(t.samples[lo:lo + n_win]) for c, t in traces.items()}
        out.append(SignalWindow(subject_id, f"{prefix}-{start_index + i:03d}", raw_state, chans,
                                duration=window_seconds))
    return out


# ---------------------------------------------------------------- corpus I/O

def _format_signal(samples: np.ndarray) -> bytes:
    return "".join(f"{v!r}\n" for v in samples.tolist()).encode("ascii")


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def store_corpus(corpus: Corpus, path) -> Path:
    """Write ``corpus`` under directory ``path`` (created if needed)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    with_windows = set()
    for w in corpus.windows:
        subject = corpus.subjects[w.subject_id]
        with_windows.add(w.subject_id)
        sub_dir = root / w.subject_id
        sub_dir.mkdir(exist_ok=True)
        files, digests = {}, {}
        for channel, trace in w.channels.items():
            rel = f"{w.subject_id}/{w.window_id}_{channel.value}.csv"
            data = _format_signal(trace.samples)
            _write_atomic(root / rel, data)
            files[channel.value] = rel
            digests[channel.value] = hashlib.sha256(data).hexdigest()
        lines.append({
            "subject_id": w.subject_id, "age": subject.age, "gender": subject.gender.value,
            "pain_responder": subject.pain_responder, "window_id": w.window_id,
            "raw_state": w.raw_state.value, "channel_files": files,
            "sample_rate": w.sample_rate, "duration": w.duration, "channel_sha256": digests,
        })
    for sid, subject in corpus.subjects.items():
        if sid not in with_windows:
            lines.append({"subject_id": sid, "age": subject.age, "gender": subject.gender.value,
                          "pain_responder": subject.pain_responder, "window_id": None})
    text = "".join(json.dumps(line, sort_keys=True) + "\n" for line in lines)
    _write_atomic(root / "manifest.jsonl", text.encode("utf-8"))
    return root


def _read_signal(path: Path, expected_sha: str | None, expected_len: int) -> np.ndarray:
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CorpusError(f"cannot read signal file ({exc.strerror})", path) from None
    if expected_sha is not None and hashlib.sha256(data).hexdigest() != expected_sha:
        raise CorpusError("checksum mismatch", path)
    if data and not data.endswith(b"\n"):
        raise CorpusError("file is truncated (last line not LF-terminated)", path,
                          data.count(b"\n") + 1)
    rows = data.decode("ascii", errors="replace").split("\n")[:-1]
    values = np.empty(len(rows))
    for i, row in enumerate(rows):
        try:
            values[i] = float(row)
        except ValueError:
            raise CorpusError(f"not a decimal value: {row[:40]!r}", path, i + 1) from None
        if not math.isfinite(values[i]):
            raise CorpusError("non-finite value", path, i + 1)
    if len(values) != expected_len:
        raise CorpusError(f"expected {expected_len} samples, found {len(values)}", path,
                          len(values))
    return values


_REQUIRED = ("subject_id", "age", "gender", "pain_responder", "window_id")


def load_corpus(path) -> Corpus:
    """Read a corpus written by :func:`store_corpus` (or a compatible converter)."""
    root = Path(path)
    manifest = root / "manifest.jsonl"
    if not manifest.is_file():
        raise CorpusError("manifest.jsonl not found", manifest)
    subjects: dict[str, SubjectRecord] = {}
    windows = []
    with open(manifest, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                entry = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"malformed JSON ({exc.msg})", manifest, lineno) from None
            if not isinstance(entry, dict):
                raise CorpusError("manifest line is not an object", manifest, lineno)
            missing = [k for k in _REQUIRED if k not in entry]
            if missing:
                raise CorpusError(f"missing field(s) {', '.join(missing)}", manifest, lineno)
            try:
                subject = SubjectRecord(str(entry["subject_id"]), entry["age"],
                                        Gender(entry["gender"]), bool(entry["pain_responder"]))
            except ValueError as exc:
                raise CorpusError(str(exc), manifest, lineno) from None
            known = subjects.setdefault(subject.subject_id, subject)
            if known != subject:
                raise CorpusError(f"conflicting attributes for subject {subject.subject_id}",
                                  manifest, lineno)
            if entry["window_id"] is None:
                continue
            try:
                state = RawState(entry["raw_state"])
                rate = int(entry["sample_rate"])
                files = entry["channel_files"]
                channels = [Channel(name) for name in files]
            except KeyError as exc:
                raise CorpusError(f"missing field {exc.args[0]}", manifest, lineno) from None
            except (ValueError, TypeError, AttributeError) as exc:
                raise CorpusError(f"bad window entry ({exc})", manifest, lineno) from None
            if rate <= 0:
                raise CorpusError("sample_rate must be positive", manifest, lineno)
            duration = float(entry.get("duration", WINDOW_SECONDS))
            digests = entry.get("channel_sha256") or {}
            expected_len = window_samples(rate, duration)
            traces = {}
            for channel in channels:
                values = _read_signal(root / files[channel.value], digests.get(channel.value),
                                      expected_len)
                traces[channel] = RawTrace(channel, rate, values)
            try:
                windows.append(SignalWindow(subject.subject_id, str(entry["window_id"]), state,
                                            traces, duration=duration))
            except DataError as exc:
                raise CorpusError(str(exc), manifest, lineno) from None
    try:
        return Corpus(subjects, windows)
    except DataError as exc:
        raise CorpusError(str(exc), manifest) from None
