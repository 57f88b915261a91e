import json

import numpy as np
import pytest

from painaffect.dataset import (AFFECT_STATES, ContextFeatures, Corpus, DemographicGroup, Gender,
                                RawState, SignalWindow, SubjectRecord, TaskLabel,
                                assign_demographic_group, curate_corpus, extract_windows,
                                load_corpus, map_pain_levels, merge_datasets, store_corpus)
from painaffect.errors import CorpusError, DataError, ParameterError
from painaffect.signal import Channel, RawTrace


def recording(seconds, rate=64, seed=0):
    rng = np.random.default_rng(seed)
    n = int(round(seconds * rate))
    return {c: RawTrace(c, rate, rng.normal(size=n)) for c in Channel}


# ------------------------------------------------------------------ labels

def test_map_pain_levels_exhaustive():
    expected = {RawState.BL: TaskLabel.BL, RawState.PL1: TaskLabel.LLP,
                RawState.PL2: TaskLabel.LLP, RawState.PL3: TaskLabel.HLP,
                RawState.PL4: TaskLabel.HLP, RawState.Amusement: TaskLabel.A,
                RawState.Anger: TaskLabel.A, RawState.Disgust: TaskLabel.A,
                RawState.Fear: TaskLabel.A, RawState.Sadness: TaskLabel.A}
    assert len(RawState) == 10
    for state in RawState:
        assert map_pain_levels(state) is expected[state]
        assert map_pain_levels(state.value) is expected[state]


def test_affect_states_all_map_to_a():
    assert {map_pain_levels(s) for s in AFFECT_STATES} == {TaskLabel.A}


# ------------------------------------------------------------------- merge

def test_merge_paper_cohort_size():
    common = [f"P{i:03d}" for i in range(82)]
    pain_only = [f"X{i}" for i in range(5)]
    emotion_only = [f"Y{i}" for i in range(3)]
    non_responders = common[::4][:20] + ["X0"]
    merged = merge_datasets(common + pain_only, common + emotion_only, non_responders)
    assert len(merged) == 62


def test_merge_disjoint_is_empty():
    assert merge_datasets(["a", "b"], ["c"], []) == []


def test_merge_set_arithmetic():
    common = [f"S{i:02d}" for i in range(10)]
    rng = np.random.default_rng(0)
    pain = list(rng.permutation(common + ["pX"]))
    emotion = list(rng.permutation(common + ["eY"]))
    merged = merge_datasets(pain, emotion, ["S03", "S07"])
    assert merged == sorted(set(common) - {"S03", "S07"})


def test_curate_drops_non_responders(toy_corpus):
    flagged = Corpus({**toy_corpus.subjects,
                      "S999": SubjectRecord("S999", 40, Gender.Male, pain_responder=False)},
                     toy_corpus.windows)
    curated = curate_corpus(flagged)
    assert "S999" not in curated.subjects
    assert all(w.subject_id in curated.subjects for w in curated.windows)


# --------------------------------------------------------------- windowing

@pytest.mark.parametrize("seconds,count", [(55.0, 10), (32.0, 5), (4.0, 0), (5.5, 1)])
def test_extract_window_counts(seconds, count):
    assert len(extract_windows(recording(seconds), "S1", RawState.Fear)) == count


def test_extract_windows_stay_inside_recording():
    rec = recording(20.0, rate=50)
    wins = extract_windows(rec, "S1", RawState.Anger, stride_seconds=2.0)
    assert len(wins) == (1000 - 275) // 100 + 1
    full = rec[Channel.EDA].samples
    for i, w in enumerate(wins):
        np.testing.assert_array_equal(w.channels[Channel.EDA].samples, full[i * 100:i * 100 + 275])
        assert w.label is TaskLabel.A


def test_extract_windows_channel_mismatch():
    rec = recording(10.0)
    rec[Channel.ECG] = RawTrace(Channel.ECG, 64, np.zeros(100))
    with pytest.raises(DataError):
        extract_windows(rec, "S1", RawState.BL)


# ------------------------------------------------------------ demographics

@pytest.mark.parametrize("gender,age,group", [
    (Gender.Female, 25, DemographicGroup.F1), (Gender.Male, 36, DemographicGroup.M5),
    (Gender.Female, 30, DemographicGroup.F2), (Gender.Male, 20, DemographicGroup.M4),
    (Gender.Female, 49.9, DemographicGroup.F2), (Gender.Male, 50, DemographicGroup.M6),
    (Gender.Female, 65, DemographicGroup.F3)])
def test_demographic_groups(gender, age, group):
    assert assign_demographic_group(gender, age) is group


@pytest.mark.parametrize("age", [19.9, 65.1, -1])
def test_demographic_group_out_of_range(age):
    with pytest.raises(ParameterError):
        assign_demographic_group(Gender.Female, age)


def test_groups_partition_cohort(small_corpus):
    counts = {}
    for s in small_corpus.subjects.values():
        counts[s.group] = counts.get(s.group, 0) + 1
    assert sum(counts.values()) == len(small_corpus.subjects)


def test_context_features_encoding():
    ctx = ContextFeatures.for_subject(SubjectRecord("S1", 36, Gender.Male))
    values = ctx.values
    assert values.shape == (ContextFeatures.N_FEATURES,)
    assert values[0] == 1.0 and values[1] == pytest.approx(16 / 45)
    assert sum(ctx.group_onehot) == 1
    assert ctx.group_onehot[list(DemographicGroup).index(DemographicGroup.M5)] == 1


# ----------------------------------------------------------------- windows

def test_signal_window_length_must_match_duration():
    with pytest.raises(DataError):
        SignalWindow("S1", "w", RawState.BL, recording(5.0))


# -------------------------------------------------------------- corpus I/O

def test_store_load_round_trip(tmp_path, toy_corpus):
    store_corpus(toy_corpus, tmp_path / "c")
    assert load_corpus(tmp_path / "c") == toy_corpus


def test_round_trip_keeps_subjects_without_windows(tmp_path):
    corpus = Corpus({"S1": SubjectRecord("S1", 22, Gender.Female)}, [])
    store_corpus(corpus, tmp_path)
    assert load_corpus(tmp_path) == corpus


def _first_signal(root):
    entry = json.loads((root / "manifest.jsonl").read_text().splitlines()[0])
    return entry, root / entry["channel_files"]["EDA"]


def test_truncated_signal_file_named(tmp_path, toy_corpus):
    store_corpus(toy_corpus.restrict(["S001"]), tmp_path)
    _, path = _first_signal(tmp_path)
    path.write_bytes(path.read_bytes()[:-7])
    with pytest.raises(CorpusError, match=path.name):
        load_corpus(tmp_path)


def test_truncated_file_without_checksum(tmp_path, toy_corpus):
    store_corpus(toy_corpus.restrict(["S001"]), tmp_path)
    manifest = tmp_path / "manifest.jsonl"
    lines = [json.loads(x) for x in manifest.read_text().splitlines()]
    for line in lines:
        line.pop("channel_sha256", None)
    manifest.write_text("".join(json.dumps(x) + "\n" for x in lines))
    _, path = _first_signal(tmp_path)
    data = path.read_bytes()
    path.write_bytes(data[:data.rindex(b"\n", 0, len(data) - 1) + 1])  # drop the last sample
    with pytest.raises(CorpusError, match=path.name):
        load_corpus(tmp_path)


def test_unknown_channel_in_manifest(tmp_path, toy_corpus):
    store_corpus(toy_corpus.restrict(["S001"]), tmp_path)
    manifest = tmp_path / "manifest.jsonl"
    lines = manifest.read_text().splitlines()
    entry = json.loads(lines[0])
    entry["channel_files"]["EMG_CORRUGATOR"] = entry["channel_files"]["EMG"]
    lines[0] = json.dumps(entry)
    manifest.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorpusError, match=r"manifest.jsonl:1"):
        load_corpus(tmp_path)


def test_malformed_manifest_line(tmp_path, toy_corpus):
    store_corpus(toy_corpus.restrict(["S001"]), tmp_path)
    manifest = tmp_path / "manifest.jsonl"
    lines = manifest.read_text().splitlines()
    lines[2] = "{not json"
    manifest.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorpusError, match=r"manifest.jsonl:3"):
        load_corpus(tmp_path)


def test_missing_signal_file(tmp_path, toy_corpus):
    store_corpus(toy_corpus.restrict(["S001"]), tmp_path)
    _, path = _first_signal(tmp_path)
    path.unlink()
    with pytest.raises(CorpusError, match=path.name):
        load_corpus(tmp_path)


def test_corpus_canonical_order_and_duplicates(toy_corpus):
    shuffled = Corpus(toy_corpus.subjects, list(reversed(toy_corpus.windows)))
    assert [w.key for w in shuffled.windows] == [w.key for w in toy_corpus.windows]
    with pytest.raises(DataError):
        Corpus(toy_corpus.subjects, toy_corpus.windows[:2] + toy_corpus.windows[:1])
