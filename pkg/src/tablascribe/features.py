"""Stroke segmentation and the 49-value stroke descriptor."""

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .audio_io import AudioClip
from .dsp import (BASS, DEFAULT_CONFIG, TREBLE, AnalysisConfig, Band, amplitude_envelope,
                  band_energy, frame_signal, magnitude_spectrogram, mfcc,
                  spectral_shape_frames, zero_crossing_rate)
from .labels import CLASSES

FEATURE_SET_VERSION = 1
TAIL_CAP_S = 2.0
MIN_SEG = 3

_BANDS = (("bass", BASS), ("treble", TREBLE))
_DECAY_FIELDS = ("early_slope", "early_icpt", "late_slope", "late_icpt", "r2_hmean", "knot_loc")
DELTA_SOURCES = ("energy_sum", "energy_mean", "late_slope")


def _product(prefixes, suffixes):
    return [f"{p}_{s}" for p, s in itertools.product(prefixes, suffixes)]


FEATURE_NAMES = tuple(
    ["centroid_mean", "centroid_std", "skew_mean", "skew_std", "kurt_mean", "kurt_std"]
    + [f"mfcc_mean_{i}" for i in range(13)]
    + ["flux_max_bass", "flux_max_treble"]
    + _product(["energy_sum", "energy_mean", "energy_std"], ["bass", "treble"])
    + ["log_attack_time", "temporal_centroid", "zcr_mean", "zcr_std"]
    + _product(_DECAY_FIELDS, ["bass", "treble"])
    + _product([f"delta_{d}" for d in DELTA_SOURCES], ["bass", "treble"])
)
assert len(FEATURE_NAMES) == 49

FEATURE_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}


class FeatureVector:
    """The 49 stroke descriptors in canonical order."""

    __slots__ = ("values",)

    def __init__(self, values):
        values = np.array(values, dtype=np.float64).reshape(-1)
        if values.size != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} values, got {values.size}")
        values.setflags(write=False)
        self.values = values

    def __getitem__(self, name):
        return float(self.values[FEATURE_INDEX[name]])

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"FeatureVector({len(self)} values)"

    def as_dict(self):
        return dict(zip(FEATURE_NAMES, self.values.tolist()))


@dataclass(frozen=True)
class StrokeSegment:
    samples: np.ndarray
    sample_rate: int
    start_s: float
    end_s: float
    label: Optional[str] = None

    def __post_init__(self):
        if not self.end_s > self.start_s:
            raise ValueError(f"segment end {self.end_s} must follow start {self.start_s}")
        if self.label is not None and self.label not in CLASSES:
            raise ValueError(f"unknown stroke label {self.label!r}")

    @property
    def clip(self):
        return AudioClip(self.samples, self.sample_rate)


def segment_strokes(onsets, clip: AudioClip, labels=None, tail_cap_s=TAIL_CAP_S):
    """Cut ``clip`` into onset-to-next-onset segments.

    The last segment ends at the clip end or ``tail_cap_s`` after its onset,
    whichever comes first.
    """
    onsets = np.asarray(onsets, dtype=np.float64).reshape(-1)
    if onsets.size == 0:
        return []
    if labels is not None and len(labels) != onsets.size:
        raise ValueError("labels and onsets differ in length")
    sr = clip.sample_rate
    duration = clip.duration
    if onsets[0] < 0 or onsets[-1] >= duration:
        raise ValueError("onsets must lie within the clip")
    ends = np.append(onsets[1:], min(duration, onsets[-1] + tail_cap_s))
    segments = []
    for i, (start, end) in enumerate(zip(onsets, ends)):
        a = int(round(start * sr))
        b = max(int(round(end * sr)), a + 1)
        segments.append(StrokeSegment(clip.samples[a:b], sr, float(start), float(end),
                                      None if labels is None else labels[i]))
    return segments


def log_energy_envelope(seg: StrokeSegment, band: Band, cfg: AnalysisConfig = DEFAULT_CONFIG):
    spec = magnitude_spectrogram(frame_signal(seg.clip, cfg), seg.sample_rate, cfg)
    return np.log(np.maximum(band_energy(spec, band), cfg.log_floor))


@dataclass(frozen=True)
class DecayFit:
    early_slope: float
    early_intercept: float
    late_slope: float
    late_intercept: float
    r2_hmean: float
    knot_index: int
    knot_loc: float
    degraded: bool = False


def _masked_lines(x, y, mask):
    n = mask.sum(axis=1)
    xm = (mask @ x) / n
    ym = (mask @ y) / n
    dx = (x[None, :] - xm[:, None]) * mask
    dy = (y[None, :] - ym[:, None]) * mask
    sxx = np.sum(dx * dx, axis=1)
    sxy = np.sum(dx * dy, axis=1)
    syy = np.sum(dy * dy, axis=1)
    slope = sxy / sxx
    icpt = ym - slope * xm
    flat = syy <= 1e-20 * np.maximum(1.0, n * ym * ym)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(flat, 1.0, np.clip(sxy * sxy / (sxx * syy), 0.0, 1.0))
    slope = np.where(flat, 0.0, slope)
    icpt = np.where(flat, ym, icpt)
    return slope, icpt, r2


def _hmean(a, b):
    s = a + b
    return np.where(s > 0, 2.0 * a * b / np.where(s > 0, s, 1.0), 0.0)


def spline_decay_fit(log_env, min_seg=MIN_SEG) -> DecayFit:
    """Two-piece linear fit to the decay after the envelope's global maximum.

    The knot shared by both pieces is the one maximising the harmonic mean of
    the two R^2 values; the earliest knot wins ties.
    """
    log_env = np.asarray(log_env, dtype=np.float64).reshape(-1)
    y = log_env[int(np.argmax(log_env)):]
    m = y.size
    x = np.arange(m, dtype=np.float64)
    if m < 2 * min_seg:
        if m == 1:
            return DecayFit(0.0, float(y[0]), 0.0, float(y[0]), 1.0, 0, 0.5, True)
        slope, icpt, r2 = _masked_lines(x, y, np.ones((1, m)))
        s, b, r = float(slope[0]), float(icpt[0]), float(r2[0])
        return DecayFit(s, b, s, b, r, (m - 1) // 2, 0.5, True)

    knots = np.arange(min_seg, m - min_seg + 1)
    left = (x[None, :] <= knots[:, None]).astype(np.float64)
    right = (x[None, :] >= knots[:, None]).astype(np.float64)
    ls, li, lr = _masked_lines(x, y, left)
    rs, ri, rr = _masked_lines(x, y, right)
    score = _hmean(lr, rr)
    best = int(np.argmax(score))
    k = int(knots[best])
    return DecayFit(float(ls[best]), float(li[best]), float(rs[best]), float(ri[best]),
                    float(score[best]), k, k / (m - 1))


def _crossing_time(env, threshold, dt):
    i = int(np.argmax(env >= threshold))
    if i == 0:
        return 0.0
    e0, e1 = env[i - 1], env[i]
    return (i - 1 + (threshold - e0) / (e1 - e0)) * dt


def log_attack_time(envelope, hop_s):
    """``log10(t90 - t20)`` of the envelope rise, floored at one hop."""
    env = np.asarray(envelope, dtype=np.float64)
    peak = env.max() if env.size else 0.0
    if peak <= 0:
        return float(np.log10(hop_s))
    rise = _crossing_time(env, 0.9 * peak, hop_s) - _crossing_time(env, 0.2 * peak, hop_s)
    if rise <= 0:
        rise = hop_s
    return float(np.log10(rise))


def temporal_centroid(envelope, hop_s):
    env = np.asarray(envelope, dtype=np.float64)
    t = np.arange(env.size) * hop_s
    total = env.sum()
    if total <= 0:
        return float(t[-1] / 2.0) if env.size else 0.0
    return float(np.dot(t, env) / total)


def _flux_max(energy):
    if energy.size < 2:
        return 0.0
    return float(max(0.0, np.max(np.diff(energy))))


def extract_features(seg: StrokeSegment, prev: Optional[FeatureVector] = None,
                     cfg: AnalysisConfig = DEFAULT_CONFIG) -> FeatureVector:
    """Compute the canonical descriptor of one stroke segment.

    Delta fields are differences against ``prev`` and are zero without it.
    """
    clip = seg.clip
    sr = seg.sample_rate
    spec = magnitude_spectrogram(frame_signal(clip, cfg), sr, cfg)
    out = {}

    centroid, skew, kurt = spectral_shape_frames(spec.frames, spec.bin_hz)
    for name, series in (("centroid", centroid), ("skew", skew), ("kurt", kurt)):
        out[f"{name}_mean"] = series.mean()
        out[f"{name}_std"] = series.std()
    coeffs = mfcc(spec, cfg).mean(axis=0)
    for i in range(13):
        out[f"mfcc_mean_{i}"] = coeffs[i]

    for band_name, band in _BANDS:
        energy = band_energy(spec, band)
        out[f"flux_max_{band_name}"] = _flux_max(energy)
        out[f"energy_sum_{band_name}"] = energy.sum()
        out[f"energy_mean_{band_name}"] = energy.mean()
        out[f"energy_std_{band_name}"] = energy.std()
        fit = spline_decay_fit(np.log(np.maximum(energy, cfg.log_floor)))
        out[f"early_slope_{band_name}"] = fit.early_slope
        out[f"early_icpt_{band_name}"] = fit.early_intercept
        out[f"late_slope_{band_name}"] = fit.late_slope
        out[f"late_icpt_{band_name}"] = fit.late_intercept
        out[f"r2_hmean_{band_name}"] = fit.r2_hmean
        out[f"knot_loc_{band_name}"] = fit.knot_loc

    env, hop_s = amplitude_envelope(clip, cfg)
    out["log_attack_time"] = log_attack_time(env, hop_s)
    out["temporal_centroid"] = temporal_centroid(env, hop_s)
    zcr = zero_crossing_rate(frame_signal(clip, cfg, window=False))
    out["zcr_mean"] = zcr.mean()
    out["zcr_std"] = zcr.std()

    for src in DELTA_SOURCES:
        for band_name, _ in _BANDS:
            key = f"{src}_{band_name}"
            out[f"delta_{key}"] = 0.0 if prev is None else out[key] - prev[key]

    return FeatureVector([out[name] for name in FEATURE_NAMES])


def extract_track(segments, cfg: AnalysisConfig = DEFAULT_CONFIG):
    """Features of consecutive segments of one track (deltas chain in order)."""
    vectors = []
    prev = None
    for seg in segments:
        prev = extract_features(seg, prev, cfg)
        vectors.append(prev)
    return vectors
