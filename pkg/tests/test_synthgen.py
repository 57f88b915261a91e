import hashlib

import numpy as np
import pytest

from painaffect import learners, synthgen
from painaffect.dataset import PAIN_STATES, Gender, RawState, TaskLabel, store_corpus
from painaffect.errors import ParameterError
from painaffect.metrics import confusion, f1_macro
from painaffect.protocol import split_known, split_personal
from painaffect.signal import Channel
from painaffect.synthgen import (GeneratorConfig, cohort_profiles, generate_cohort,
                                 generate_window, make_profile)


def tree_digest(root):
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(path.relative_to(root)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def stream(*key):
    return np.random.default_rng(np.random.SeedSequence(1234, spawn_key=key))


def test_default_config_values():
    cfg = GeneratorConfig()
    assert (cfg.n_subjects, cfg.female_count, cfg.windows_per_state, cfg.sample_rate,
            cfg.master_seed) == (62, 33, 20, 512, 42)


@pytest.mark.parametrize("kwargs,field", [(dict(n_subjects=0), "n_subjects"),
                                          (dict(female_count=5, n_subjects=3), "female_count"),
                                          (dict(sample_rate=0), "sample_rate"),
                                          (dict(windows_per_state=0), "windows_per_state"),
                                          (dict(affect_overlap=1.5), "affect_overlap")])
def test_config_validation_names_field(kwargs, field):
    with pytest.raises(ParameterError, match=field):
        GeneratorConfig(**kwargs)


def test_default_cohort_shape(default_cohort):
    subjects = default_cohort.subjects.values()
    assert len(default_cohort.subjects) == 62
    assert sum(s.gender is Gender.Female for s in subjects) == 33
    ages = [s.age for s in subjects]
    assert 20 <= min(ages) and max(ages) <= 65
    assert 30 <= np.median(ages) <= 42
    assert len(default_cohort) == 62 * 10 * 20
    win = default_cohort.windows[0]
    assert win.sample_rate == 512 and len(win.channels[Channel.EDA]) == 2816


def test_single_subject_single_window():
    corpus = generate_cohort(GeneratorConfig(n_subjects=1, female_count=1, windows_per_state=1))
    assert len(corpus) == 10
    assert sorted(w.raw_state.value for w in corpus.windows) == sorted(s.value for s in RawState)


def test_generation_is_byte_identical(tmp_path):
    cfg = GeneratorConfig(n_subjects=3, female_count=1, windows_per_state=2)
    store_corpus(generate_cohort(cfg), tmp_path / "a")
    store_corpus(generate_cohort(cfg, n_jobs=3), tmp_path / "b")
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_seed_changes_output():
    a = generate_cohort(GeneratorConfig(n_subjects=1, female_count=0, windows_per_state=1))
    b = generate_cohort(GeneratorConfig(n_subjects=1, female_count=0, windows_per_state=1,
                                        master_seed=43))
    assert a != b


def test_window_determinism():
    cfg = GeneratorConfig(n_subjects=1, female_count=0)
    profile = make_profile(cfg, 0, "S1", Gender.Male)
    a = generate_window(profile, RawState.PL3, stream(7), cfg)
    b = generate_window(profile, RawState.PL3, stream(7), cfg)
    assert a == b


def test_subject_prefix_is_stable_when_cohort_grows():
    small = cohort_profiles(GeneratorConfig(n_subjects=5, female_count=2))
    large = cohort_profiles(GeneratorConfig(n_subjects=8, female_count=2))
    assert small[0].scr_amplitude == large[0].scr_amplitude


def _channel_stats(window):
    return np.array([f(window.channels[c].samples) for c in Channel for f in (np.mean, np.std)])


def test_non_responder_pain_matches_baseline():
    cfg = GeneratorConfig(n_subjects=1, female_count=0)
    profile = make_profile(cfg, 0, "S1", Gender.Female, pain_responder=False)
    assert all(profile.responsiveness[s] == 0.0 for s in PAIN_STATES)
    n = 150
    bl = np.array([_channel_stats(generate_window(profile, RawState.BL, stream(0, i), cfg))
                   for i in range(n)])
    pl4 = np.array([_channel_stats(generate_window(profile, RawState.PL4, stream(1, i), cfg))
                    for i in range(n)])
    # noise floor: 3 standard errors of the difference of means
    floor = 3 * np.sqrt(bl.var(axis=0, ddof=1) / n + pl4.var(axis=0, ddof=1) / n)
    assert np.all(np.abs(bl.mean(axis=0) - pl4.mean(axis=0)) < floor)
    # same stream: the two states are indistinguishable sample for sample
    same_bl = generate_window(profile, RawState.BL, stream(9), cfg)
    same_pl = generate_window(profile, RawState.PL4, stream(9), cfg)
    for c in Channel:
        np.testing.assert_array_equal(same_bl.channels[c].samples, same_pl.channels[c].samples)


def _count_responses(monkeypatch, profile, state, cfg, draws):
    calls = []
    original = synthgen._scr_kernel

    def counting(*args):
        calls.append(1)
        return original(*args)

    monkeypatch.setattr(synthgen, "_scr_kernel", counting)
    counts = []
    for i in range(draws):
        before = len(calls)
        generate_window(profile, state, stream(list(RawState).index(state), i), cfg)
        counts.append(len(calls) - before)
    monkeypatch.setattr(synthgen, "_scr_kernel", original)
    return np.array(counts)


def test_hlp_has_more_phasic_events_than_baseline(monkeypatch):
    cfg = GeneratorConfig(n_subjects=1, female_count=0)
    profile = make_profile(cfg, 3, "S1", Gender.Male)
    bl = _count_responses(monkeypatch, profile, RawState.BL, cfg, 200)
    for state in (RawState.PL3, RawState.PL4):
        hlp = _count_responses(monkeypatch, profile, state, cfg, 200)
        se = np.sqrt(hlp.var(ddof=1) / 200 + bl.var(ddof=1) / 200)
        assert hlp.mean() - bl.mean() > 3 * se


def test_effect_directions_follow_table():
    """Group means of window statistics move the way the effect table says."""
    cfg = GeneratorConfig(n_subjects=1, female_count=0)
    profile = make_profile(cfg, 1, "S1", Gender.Female)
    n = 500

    def stats(state, tag):
        out = []
        for i in range(n):
            w = generate_window(profile, state, stream(tag, i), cfg)
            eda, emg = w.channels[Channel.EDA].samples, w.channels[Channel.EMG].samples
            out.append((eda.mean(), np.abs(emg).mean()))
        return np.array(out)

    base = stats(RawState.BL, 0)
    previous = base
    for tag, state in enumerate((RawState.PL1, RawState.PL3), start=1):
        effect = cfg.state_effects[state]
        assert effect.eda_tonic > 0 and effect.emg_burst_rate > 0
        cur = stats(state, tag)
        se = np.sqrt(cur.var(axis=0, ddof=1) / n + previous.var(axis=0, ddof=1) / n)
        assert np.all(cur.mean(axis=0) - previous.mean(axis=0) > 3 * se)
        previous = cur


def test_affect_overlap_knob_scales_affect_effects():
    low = synthgen.default_state_effects(0.2)
    high = synthgen.default_state_effects(0.9)
    for state in (RawState.Fear, RawState.Anger):
        assert high[state].scr_rate > low[state].scr_rate
        assert high[state].eda_tonic > low[state].eda_tonic
    assert low[RawState.PL4] == high[RawState.PL4]


def test_person_specific_beats_cohort_model(default_cohort, default_features):
    """Within-subject KNN scores above the cohort-wide KNN for >= 90% of subjects.

    Both models are scored on the same subject's held-out windows, averaged
    over five split seeds; all four task labels are used.
    """
    corpus, store = default_cohort, default_features
    X = store.matrix(np.arange(len(corpus)), ["EDA", "ECG", "EMG"])
    y = np.array(corpus.labels, dtype=object)
    subject = np.array([w.subject_id for w in corpus.windows])
    classes = list(TaskLabel)
    spec = learners.ClassifierSpec("KNN")
    general = {sid: [] for sid in corpus.subject_ids()}
    personal = {sid: [] for sid in corpus.subject_ids()}
    for seed in range(5):
        split = split_known(corpus, 0.7, seed)
        model = learners.fit(spec, X[split.train], y[split.train], classes)
        pred = np.array(learners.predict(model, X[split.test]), dtype=object)
        for sid in corpus.subject_ids():
            mask = subject[split.test] == sid
            general[sid].append(f1_macro(confusion(y[split.test][mask], pred[mask], classes)))
            own = split_personal(corpus, sid, 0.7, seed)
            own_model = learners.fit(spec, X[own.train], y[own.train], classes)
            personal[sid].append(f1_macro(confusion(
                y[own.test], learners.predict(own_model, X[own.test]), classes)))
    wins = sum(np.mean(personal[s]) > np.mean(general[s]) for s in corpus.subject_ids())
    assert wins >= 0.9 * len(corpus.subjects), f"{wins}/{len(corpus.subjects)}"
