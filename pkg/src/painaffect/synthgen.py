"""Seeded synthetic cohort generator producing corpora in the dataset format.

Waveforms are deliberately simple:

* EDA: tonic level with slow drift, plus Bateman-shaped skin-conductance
  responses whose onsets follow a Poisson process, plus noise.
* ECG: a P-QRS-T template repeated at a jittered heart rate, plus baseline
  wander and noise.
* EMG: broadband baseline noise plus Hann-enveloped contraction bursts at a
  Poisson rate; bursts also lift the slow signal level (posture shift).

Every (subject, state, window) unit draws from its own RNG stream derived from
the master seed, so output does not depend on generation order or threading.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .dataset import (AFFECT_STATES, MAX_AGE, MIN_AGE, PAIN_STATES, Corpus, Gender, RawState,
                      SignalWindow, SubjectRecord, window_samples)
from .errors import ParameterError
from .signal import Channel, RawTrace

_STATE_INDEX = {s: i for i, s in enumerate(RawState)}


@dataclass(frozen=True)
class StateEffect:
    """Mean shifts of one recorded state relative to baseline."""
    eda_tonic: float = 0.0       # microsiemens
    scr_rate: float = 0.0        # extra skin-conductance responses per second
    heart_rate: float = 0.0      # beats per minute
    hrv: float = 0.0             # change of inter-beat-interval std, seconds
    emg_burst_rate: float = 0.0  # extra contraction bursts per second
    latency_shift: float = 0.0   # seconds; shifts stimulus-locked responses


def default_state_effects(affect_overlap: float = 0.6) -> dict[RawState, StateEffect]:
    """Default effect table.

    ``affect_overlap`` in [0, 1] scales how far discrete-affect states move
    toward the pain states' EDA/EMG activity; 1 puts the strongest affects on
    top of high-level pain.
    """
    pain = {
        RawState.BL: StateEffect(),
        RawState.PL1: StateEffect(0.10, 0.20, 2.0, -0.004, 0.10, 0.0),
        RawState.PL2: StateEffect(0.20, 0.30, 3.0, -0.006, 0.18, -0.2),
        RawState.PL3: StateEffect(0.40, 0.55, 5.0, -0.010, 0.40, -0.7),
        RawState.PL4: StateEffect(0.55, 0.70, 7.0, -0.014, 0.55, -0.9),
    }
    hlp = pain[RawState.PL4]
    # relative arousal of each affect; fear/anger are strongest
    arousal = {RawState.Amusement: 0.45, RawState.Anger: 0.8, RawState.Disgust: 0.6,
               RawState.Fear: 0.9, RawState.Sadness: 0.3}
    affect = {}
    for state, level in arousal.items():
        k = affect_overlap * level
        affect[state] = StateEffect(eda_tonic=k * hlp.eda_tonic, scr_rate=k * hlp.scr_rate,
                                    heart_rate=(1.5 * level - 0.5) * 3.0,
                                    hrv=0.004 * (1 - 2 * level),
                                    emg_burst_rate=0.5 * k * hlp.emg_burst_rate)
    return {**pain, **affect}


@dataclass(frozen=True)
class GeneratorConfig:
    n_subjects: int = 62
    female_count: int = 33
    windows_per_state: int = 20
    sample_rate: int = 512
    master_seed: int = 42
    affect_overlap: float = 0.6
    subject_spread: float = 0.35
    n_non_responders: int = 0
    state_effects: dict = field(default=None, compare=False, hash=False, repr=False)

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ParameterError("n_subjects must be >= 1")
        if not 0 <= self.female_count <= self.n_subjects:
            raise ParameterError("female_count must be in [0, n_subjects]")
        if self.windows_per_state < 1:
            raise ParameterError("windows_per_state must be >= 1")
        if self.sample_rate < 1:
            raise ParameterError("sample_rate must be >= 1")
        if self.subject_spread < 0:
            raise ParameterError("subject_spread must be >= 0")
        if self.n_non_responders < 0:
            raise ParameterError("n_non_responders must be >= 0")
        if not 0 <= self.affect_overlap <= 1:
            raise ParameterError("affect_overlap must be in [0, 1]")
        if self.state_effects is None:
            object.__setattr__(self, "state_effects", default_state_effects(self.affect_overlap))
        else:
            table = {RawState(k): v for k, v in self.state_effects.items()}
            missing = [s.value for s in RawState if s not in table]
            if missing:
                raise ParameterError(f"state_effects lacks {', '.join(missing)}")
            object.__setattr__(self, "state_effects", table)

    def as_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "state_effects"}
        out["state_effects"] = {s.value: vars(e) for s, e in self.state_effects.items()}
        return out


@dataclass(frozen=True)
class SubjectProfile:
    subject_id: str
    age: int
    gender: Gender
    baseline_levels: dict      # Channel -> level (EDA uS, ECG bpm, EMG amplitude)
    responsiveness: dict       # RawState -> gain multiplier
    noise_scale: float
    pain_responder: bool = True
    # individual response morphology
    scr_amplitude: float = 0.5
    scr_rise: float = 1.0
    scr_decay: float = 3.5
    eda_drift: float = -0.02
    hrv_base: float = 0.04
    emg_burst_length: float = 0.8
    ecg_r_amplitude: float = 1.0
    response_latency: float = 2.0
    response_jitter: float = 0.4
    emg_lag: float = 0.3

    def __post_init__(self):
        if self.noise_scale <= 0:
            raise ParameterError("noise_scale must be positive")

    def record(self) -> SubjectRecord:
        return SubjectRecord(self.subject_id, self.age, self.gender, self.pain_responder)


def _stream(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


def make_profile(config: GeneratorConfig, index: int, subject_id: str, gender: Gender,
                 pain_responder: bool = True) -> SubjectProfile:
    rng = _stream(config.master_seed, index)
    spread = config.subject_spread
    # age: 20 + 45 * Beta(2, 3.4) has median close to 36
    age = int(round(MIN_AGE + (MAX_AGE - MIN_AGE) * rng.beta(2.0, 3.4)))
    # curated responders react at least moderately; weaker reactors count as non-responders
    pain_gain = max(0.6, float(np.exp(rng.normal(0.0, spread)))) if pain_responder else 0.0
    affect_gain = float(np.exp(rng.normal(0.0, spread)))
    gains = {RawState.BL: 1.0}
    for state in PAIN_STATES:
        gains[state] = pain_gain * float(np.exp(rng.normal(0.0, 0.15 * spread)))
    for state in AFFECT_STATES:
        gains[state] = affect_gain * float(np.exp(rng.normal(0.0, 0.5 * spread)))
    if not pain_responder:
        gains.update({s: 0.0 for s in PAIN_STATES})
    levels = {
        Channel.EDA: float(np.exp(rng.normal(math.log(5.0), 0.4))),
        Channel.ECG: float(np.clip(rng.normal(70.0, 8.0), 50.0, 95.0)),
        Channel.EMG: float(np.exp(rng.normal(math.log(10.0), 0.3))),
    }
    return SubjectProfile(
        subject_id=subject_id, age=age, gender=gender, baseline_levels=levels,
        responsiveness=gains, noise_scale=float(np.exp(rng.normal(0.0, spread))),
        pain_responder=pain_responder,
        scr_amplitude=float(np.exp(rng.normal(math.log(0.5), spread))),
        scr_rise=float(rng.uniform(0.6, 1.4)),
        scr_decay=float(rng.uniform(2.5, 6.0)),
        eda_drift=float(rng.normal(-0.02, 0.02)),
        hrv_base=float(rng.uniform(0.02, 0.06)),
        emg_burst_length=float(rng.uniform(0.5, 1.2)),
        ecg_r_amplitude=float(np.exp(rng.normal(0.0, 0.2))),
        response_latency=float(rng.uniform(1.2, 4.5)),
        response_jitter=float(rng.uniform(0.05, 0.2)),
        emg_lag=float(rng.uniform(-0.5, 1.0)),
    )


def _scr_kernel(t: np.ndarray, rise: float, decay: float) -> np.ndarray:
    """Bateman-shaped response scaled to unit peak; zero before onset."""
    tau_r = 0.5 * rise  # < decay for every generated profile
    t_peak = math.log(decay / tau_r) / (1.0 / tau_r - 1.0 / decay)
    peak = math.exp(-t_peak / decay) - math.exp(-t_peak / tau_r)
    pos = np.maximum(t, 0.0)
    return np.where(t > 0, (np.exp(-pos / decay) - np.exp(-pos / tau_r)) / peak, 0.0)


def _onsets(rng, background: float, evoked: float, lo: float, hi: float, locked: bool,
            latency: float, jitter: float) -> np.ndarray:
    """Event times of a Poisson process on [lo, hi).

    The background part is homogeneous. The evoked part (rate ``evoked`` per
    second on average) is homogeneous too unless ``locked``, in which case its
    intensity is a Gaussian bump around ``latency``: responses time-locked to a
    stimulus at the window start.
    """
    span = hi - lo
    times = [rng.uniform(lo, hi, size=rng.poisson(background * span))]
    if locked:
        count = rng.poisson(evoked * (hi - 0.0))
        times.append(rng.normal(latency, jitter, size=count))
    else:
        times.append(rng.uniform(lo, hi, size=rng.poisson(evoked * span)))
    out = np.concatenate(times)
    return out[(out >= lo) & (out < hi)]


def _ecg_template(phase_t: np.ndarray, r_amp: float) -> np.ndarray:
    # (offset s, width s, amplitude) for P, Q, R, S, T
    waves = ((-0.20, 0.025, 0.12), (-0.03, 0.010, -0.15), (0.0, 0.012, 1.0),
             (0.03, 0.010, -0.25), (0.25, 0.045, 0.30))
    out = np.zeros_like(phase_t)
    for offset, width, amp in waves:
        out += amp * np.exp(-0.5 * ((phase_t - offset) / width) ** 2)
    return r_amp * out


def generate_window(profile: SubjectProfile, state, rng: np.random.Generator,
                    config: GeneratorConfig | None = None, window_id: str = "w000",
                    state_effects: dict | None = None) -> SignalWindow:
    """One 5.5 s three-channel window for ``profile`` in ``state``."""
    config = config or GeneratorConfig(n_subjects=1, female_count=0)
    state = RawState(state)
    table = state_effects or config.state_effects
    effect = table[state]
    gain = profile.responsiveness.get(state, 1.0)
    rate = config.sample_rate
    n = window_samples(rate)
    duration = n / rate
    t = np.arange(n) / rate
    noise = profile.noise_scale
    # responses grow with the subject's gain for this state; baseline is the reference
    boost = 0.0 if state is RawState.BL else 0.3 * gain

    # EDA
    base_scr_rate = 0.05
    lead_in = 3 * profile.scr_decay
    onsets = _onsets(rng, base_scr_rate, gain * effect.scr_rate, -lead_in, duration,
                     locked=state in PAIN_STATES,
                     latency=profile.response_latency + effect.latency_shift,
                     jitter=profile.response_jitter)
    amps = profile.scr_amplitude * (1.0 + boost) * rng.lognormal(0.0, 0.3, size=onsets.size)
    eda = np.full(n, profile.baseline_levels[Channel.EDA] + gain * effect.eda_tonic)
    eda += profile.eda_drift * t + 0.05 * rng.standard_normal() * t
    for onset, amp in zip(onsets, amps):
        eda += amp * _scr_kernel(t - onset, profile.scr_rise, profile.scr_decay)
    eda += 0.02 * noise * rng.standard_normal(n)
    eda += 0.03 * noise * np.cumsum(rng.standard_normal(n)) / math.sqrt(rate)

    # ECG
    hr = max(35.0, profile.baseline_levels[Channel.ECG] + gain * effect.heart_rate)
    ibi_sd = max(0.005, profile.hrv_base + gain * effect.hrv)
    beats = []
    tb = -rng.uniform(0.0, 60.0 / hr)
    while tb < duration + 1.0:
        beats.append(tb)
        tb += max(0.25, rng.normal(60.0 / hr, ibi_sd))
    beats = np.asarray(beats)
    nearest = np.searchsorted(beats, t)
    prev_b = beats[np.clip(nearest - 1, 0, beats.size - 1)]
    next_b = beats[np.clip(nearest, 0, beats.size - 1)]
    phase = np.where(np.abs(t - prev_b) < np.abs(next_b - t), t - prev_b, t - next_b)
    ecg = _ecg_template(phase, profile.ecg_r_amplitude)
    resp_f = rng.uniform(0.2, 0.33)
    ecg += 0.1 * np.sin(2 * np.pi * resp_f * t + rng.uniform(0, 2 * np.pi))
    ecg += 0.03 * noise * rng.standard_normal(n)

    # EMG
    level = profile.baseline_levels[Channel.EMG]
    starts = _onsets(rng, 0.05, gain * effect.emg_burst_rate, -profile.emg_burst_length,
                     duration, locked=state in PAIN_STATES,
                     latency=profile.response_latency + effect.latency_shift + profile.emg_lag,
                     jitter=profile.response_jitter)
    envelope = np.zeros(n)
    for start in starts:
        length = profile.emg_burst_length * rng.uniform(0.7, 1.3)
        u = (t - start) / length
        inside = (u >= 0) & (u <= 1)
        envelope[inside] += (1.0 + boost) * rng.uniform(2.0, 4.0) * np.sin(np.pi * u[inside]) ** 2
    emg = level * (0.2 * noise + envelope) * rng.standard_normal(n)
    emg += level * 0.4 * envelope
    emg += level * 0.05 * noise * np.cumsum(rng.standard_normal(n)) / math.sqrt(rate)

    channels = {Channel.EDA: RawTrace(Channel.EDA, rate, eda),
                Channel.ECG: RawTrace(Channel.ECG, rate, ecg),
                Channel.EMG: RawTrace(Channel.EMG, rate, emg)}
    return SignalWindow(profile.subject_id, window_id, state, channels)


def cohort_profiles(config: GeneratorConfig) -> list[SubjectProfile]:
    total = config.n_subjects + config.n_non_responders
    rng = _stream(config.master_seed, total, 0xC0)
    genders = [Gender.Female] * config.female_count + \
        [Gender.Male] * (config.n_subjects - config.female_count)
    genders = [genders[i] for i in rng.permutation(config.n_subjects)]
    genders += [Gender(g) for g in rng.choice(["Female", "Male"], size=config.n_non_responders)]
    width = max(3, len(str(total)))
    return [make_profile(config, i, f"S{i + 1:0{width}d}", genders[i],
                         pain_responder=i < config.n_subjects)
            for i in range(total)]


def _subject_windows(config: GeneratorConfig, index: int, profile: SubjectProfile):
    out = []
    for state in RawState:
        for w in range(config.windows_per_state):
            rng = _stream(config.master_seed, index, _STATE_INDEX[state], w)
            out.append(generate_window(profile, state, rng, config,
                                       window_id=f"{state.value}-{w:03d}"))
    return out


def generate_cohort(config: GeneratorConfig | None = None, n_jobs: int = 1) -> Corpus:
    """Generate the full synthetic corpus for ``config``.

    Non-responders (``n_non_responders``) are included and flagged; use
    :func:`painaffect.dataset.curate_corpus` to drop them.
    """
    config = config or GeneratorConfig()
    profiles = cohort_profiles(config)
    jobs = list(enumerate(profiles))
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            chunks = list(pool.map(lambda job: _subject_windows(config, *job), jobs))
    else:
        chunks = [_subject_windows(config, *job) for job in jobs]
    windows = [w for chunk in chunks for w in chunk]
    return Corpus({p.subject_id: p.record() for p in profiles}, windows)


def with_overrides(config: GeneratorConfig, **changes) -> GeneratorConfig:
    if "affect_overlap" in changes and "state_effects" not in changes:
        changes["state_effects"] = None
    return replace(config, **changes)
