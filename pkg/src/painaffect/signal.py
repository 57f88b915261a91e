"""Biopotential preprocessing: smoothing, normalization, downsampling, feature vectors.

Every array function works along the last axis, so a single trace (shape ``(L,)``)
and a batch of traces (shape ``(N, L)``) go through the same code path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .errors import DataError, ParameterError


class Channel(str, Enum):
    EDA = "EDA"
    ECG = "ECG"
    EMG = "EMG"


# fusion order for concatenated feature blocks
CHANNEL_ORDER = (Channel.EDA, Channel.ECG, Channel.EMG)


@dataclass(frozen=True)
class RawTrace:
    channel: Channel
    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise DataError("trace samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise DataError("trace samples must be finite")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise DataError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        object.__setattr__(self, "channel", Channel(self.channel))
        object.__setattr__(self, "sample_rate", int(self.sample_rate))
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, RawTrace):
            return NotImplemented
        return (self.channel == other.channel and self.sample_rate == other.sample_rate
                and np.array_equal(self.samples, other.samples))

    def replace(self, samples) -> "RawTrace":
        return RawTrace(self.channel, self.sample_rate, samples)


def _odd_at_least(n: float) -> int:
    k = max(3, math.ceil(n))
    return k if k % 2 else k + 1


def stride_for(ds_window: int, overlap: float) -> int:
    """Hop between consecutive moving-average windows (half-up rounding)."""
    return max(1, math.floor(ds_window * (1.0 - overlap) + 0.5))


@dataclass(frozen=True)
class PreprocessConfig:
    """Smoothing and downsampling parameters, in samples.

    Defaults correspond to 0.25 s windows at 512 samples/s.
    """
    sg_window: int = 129
    sg_order: int = 3
    ds_window: int = 128
    overlap: float = 0.8

    def __post_init__(self):
        if self.sg_window < 3 or self.sg_window % 2 == 0:
            raise ParameterError(f"sg_window must be odd and >= 3, got {self.sg_window}")
        if not 0 <= self.sg_order < self.sg_window:
            raise ParameterError(f"sg_order must be in [0, sg_window), got {self.sg_order}")
        if self.ds_window < 1:
            raise ParameterError(f"ds_window must be >= 1, got {self.ds_window}")
        if not 0.0 <= self.overlap < 1.0:
            raise ParameterError(f"overlap must be in [0, 1), got {self.overlap}")

    @classmethod
    def for_rate(cls, sample_rate: int, sg_seconds: float = 0.25, ds_seconds: float = 0.25,
                 sg_order: int = 3, overlap: float = 0.8) -> "PreprocessConfig":
        return cls(sg_window=_odd_at_least(sg_seconds * sample_rate), sg_order=sg_order,
                   ds_window=max(1, round(ds_seconds * sample_rate)), overlap=overlap)

    @property
    def stride(self) -> int:
        return stride_for(self.ds_window, self.overlap)

    def n_components(self, n_samples: int) -> int:
        return downsampled_length(n_samples, self.ds_window, self.stride)

    def as_dict(self) -> dict:
        return {"sg_window": self.sg_window, "sg_order": self.sg_order,
                "ds_window": self.ds_window, "overlap": self.overlap}


@dataclass(frozen=True)
class FeatureVector:
    components: np.ndarray
    context: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def length(self) -> int:
        return self.components.size + self.context.size

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([self.components, self.context])


def _as_array(x) -> np.ndarray:
    if isinstance(x, RawTrace):
        return x.samples
    return np.asarray(x, dtype=float)


def _rewrap(template, values):
    return template.replace(values) if isinstance(template, RawTrace) else values


def sg_coefficients(window: int, order: int) -> np.ndarray:
    """Weights that evaluate the least-squares polynomial fit at the window center."""
    half = window // 2
    t = np.arange(-half, half + 1, dtype=float)
    vander = np.vander(t, order + 1, increasing=True)
    # row 0 of the pseudo-inverse gives the constant term, i.e. the fit at t=0
    return np.linalg.pinv(vander)[0]


def savitzky_golay(trace, window: int, order: int):
    """Savitzky-Golay smoothing with mirror padding at the edges.

    Output has the input's length. Accepts a RawTrace (returns a RawTrace) or an
    array whose last axis is time.
    """
    x = _as_array(trace)
    length = x.shape[-1]
    if window % 2 == 0 or window < 3:
        raise ParameterError(f"window must be odd and >= 3, got {window}")
    if window > length:
        raise ParameterError(f"window {window} exceeds trace length {length}")
    if not 0 <= order < window:
        raise ParameterError(f"order must be in [0, window), got {order}")
    coeffs = sg_coefficients(window, order)
    # 'mirror' reflects about the edge sample without repeating it: (d c b | a b c d)
    out = ndimage.correlate1d(x, coeffs, axis=-1, mode="mirror")
    return _rewrap(trace, out)


class Normalized(NamedTuple):
    values: object
    degenerate: object


def minmax_normalize(trace) -> Normalized:
    """Map each trace onto [0, 1]; constant traces become all zeros and are flagged."""
    x = _as_array(trace)
    if x.shape[-1] == 0:
        raise DataError("cannot normalize an empty trace")
    if not np.all(np.isfinite(x)):
        raise DataError("trace contains non-finite values")
    lo = x.min(axis=-1, keepdims=True)
    hi = x.max(axis=-1, keepdims=True)
    span = hi - lo
    degenerate = span == 0
    out = np.where(degenerate, 0.0, (x - lo) / np.where(degenerate, 1.0, span))
    # guard against rounding just outside [0, 1]
    np.clip(out, 0.0, 1.0, out=out)
    flag = degenerate[..., 0]
    if flag.ndim == 0:
        flag = bool(flag)
    return Normalized(_rewrap(trace, out), flag)


def downsampled_length(length: int, ds_window: int, stride: int) -> int:
    if ds_window > length:
        return 0
    return (length - ds_window) // stride + 1


def downsample_moving_average(trace, ds_window: int, overlap: float) -> np.ndarray:
    """Means of sliding windows of ``ds_window`` samples with the given overlap."""
    x = _as_array(trace)
    length = x.shape[-1]
    if ds_window < 1:
        raise ParameterError(f"ds_window must be >= 1, got {ds_window}")
    if ds_window > length:
        raise ParameterError(f"ds_window {ds_window} exceeds trace length {length}")
    if not 0.0 <= overlap < 1.0:
        raise ParameterError(f"overlap must be in [0, 1), got {overlap}")
    stride = stride_for(ds_window, overlap)
    n = downsampled_length(length, ds_window, stride)
    out = np.empty(x.shape[:-1] + (n,))
    for i in range(n):
        out[..., i] = x[..., i * stride:i * stride + ds_window].mean(axis=-1)
    return out


def preprocess(traces, config: PreprocessConfig) -> np.ndarray:
    """filter -> normalize -> downsample on one trace or a batch (last axis = time)."""
    smoothed = savitzky_golay(_as_array(traces), config.sg_window, config.sg_order)
    normalized = minmax_normalize(smoothed).values
    return downsample_moving_average(normalized, config.ds_window, config.overlap)


def ordered_channels(modalities: Iterable) -> list[Channel]:
    wanted = {Channel(m) for m in modalities}
    if not wanted:
        raise ParameterError("at least one modality is required")
    return [c for c in CHANNEL_ORDER if c in wanted]


def build_feature_vector(window, modalities: Iterable, config: PreprocessConfig,
                         context: Sequence[float] | np.ndarray | None = None) -> FeatureVector:
    """Feature vector for one signal window.

    ``window`` is anything with a ``channels`` mapping of Channel -> RawTrace (a
    SignalWindow) or the mapping itself. Channel blocks are concatenated in
    EDA, ECG, EMG order; context features, if given, are appended last.
    """
    channels: Mapping = getattr(window, "channels", window)
    blocks = []
    for channel in ordered_channels(modalities):
        if channel not in channels:
            raise DataError(f"window is missing channel {channel.value}")
        blocks.append(preprocess(channels[channel], config))
    ctx = np.zeros(0) if context is None else np.asarray(getattr(context, "values", context), dtype=float)
    return FeatureVector(np.concatenate(blocks), ctx)
