"""Training-set balancing and augmentation.

Three methods, usable alone or combined: pitch-shifting resonant strokes,
repeated oversampling, and SMOTE interpolation in feature space. All of
them only add rows, and added rows keep the tabla set of their parent.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .audio_io import sinc_resample
from .dataset import StrokeDataset
from .dsp import DEFAULT_CONFIG, AnalysisConfig
from .features import FEATURE_NAMES, FeatureVector, StrokeSegment, extract_features
from .labels import CLASSES, RESONANT

STRATEGIES = ("none", "oversample", "smote", "pitch", "pitch+oversample", "pitch+smote")

VOCODER_FFT = 1024
VOCODER_HOP = 256


@dataclass(frozen=True)
class AugmentConfig:
    pitch_levels: tuple = (-0.5, -0.25, 0.25, 0.5)
    pitch_categories: tuple = RESONANT
    smote_k: int = 5
    strategy: str = "none"

    def __post_init__(self):
        if any(level == 0 for level in self.pitch_levels):
            raise ValueError("pitch levels must be nonzero")
        if self.smote_k < 1:
            raise ValueError("smote_k must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")


# -- phase vocoder --------------------------------------------------------

def _hann(n):
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _stft(x, n_fft, hop):
    pad = n_fft // 2
    x = np.pad(x, (pad, pad + n_fft))
    n_frames = 1 + (x.size - n_fft) // hop
    frames = np.lib.stride_tricks.sliding_window_view(x, n_fft)[::hop][:n_frames]
    return np.fft.rfft(frames * _hann(n_fft), axis=1).T


def _istft(D, n_fft, hop, length):
    win = _hann(n_fft)
    frames = np.fft.irfft(D.T, n=n_fft, axis=1) * win
    n_frames = frames.shape[0]
    total = n_fft + hop * (n_frames - 1)
    y = np.zeros(total)
    wsum = np.zeros(total)
    for i in range(n_frames):
        y[i * hop:i * hop + n_fft] += frames[i]
        wsum[i * hop:i * hop + n_fft] += win * win
    nz = wsum > 1e-10
    y[nz] /= wsum[nz]
    pad = n_fft // 2
    y = y[pad:pad + length]
    if y.size < length:
        y = np.concatenate([y, np.zeros(length - y.size)])
    return y


def time_stretch(x, rate, n_fft=VOCODER_FFT, hop=VOCODER_HOP):
    """Phase-vocoder time scaling; ``rate > 1`` shortens the signal."""
    x = np.asarray(x, dtype=np.float64)
    D = _stft(x, n_fft, hop)
    n_bins, n_frames = D.shape
    steps = np.arange(0, n_frames, rate)
    D = np.concatenate([D, np.zeros((n_bins, 2))], axis=1)
    advance = np.linspace(0, np.pi * hop, n_bins)
    phase = np.angle(D[:, 0])
    out = np.empty((n_bins, steps.size), dtype=complex)
    for t, step in enumerate(steps):
        i = int(step)
        frac = step - i
        c0, c1 = D[:, i], D[:, i + 1]
        mag = (1.0 - frac) * np.abs(c0) + frac * np.abs(c1)
        out[:, t] = mag * np.exp(1j * phase)
        dphi = np.angle(c1) - np.angle(c0) - advance
        dphi -= 2.0 * np.pi * np.round(dphi / (2.0 * np.pi))
        phase = phase + advance + dphi
    return _istft(out, n_fft, hop, int(round(x.size / rate)))


def pitch_shift(samples, sample_rate, semitones, n_fft=VOCODER_FFT, hop=VOCODER_HOP):
    """Shift pitch by ``semitones`` keeping the sample count unchanged."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot pitch-shift empty audio")
    if abs(semitones) > 12:
        raise ValueError("pitch shifts are limited to one octave")
    if semitones == 0:
        return x.copy()
    ratio = 2.0 ** (semitones / 12.0)
    stretched = time_stretch(x, 1.0 / ratio, n_fft, hop)
    return sinc_resample(stretched, x.size, ratio=x.size / stretched.size)


# -- dataset-level strategies ---------------------------------------------

def _previous_rows(ds: StrokeDataset):
    """Index of each original row's predecessor stroke in its track, or -1."""
    lookup = {}
    for i in range(len(ds)):
        if not ds.synthetic[i]:
            lookup[(ds.track[i], int(ds.stroke_index[i]))] = i
    return [lookup.get((ds.track[i], int(ds.stroke_index[i]) - 1), -1) for i in range(len(ds))]


def augment_pitch(ds: StrokeDataset, cfg: AugmentConfig = AugmentConfig(),
                  analysis: AnalysisConfig = DEFAULT_CONFIG) -> StrokeDataset:
    """Add one re-extracted row per pitch level for each resonant stroke.

    Deltas of a shifted stroke are taken against its unshifted predecessor.
    """
    if not cfg.pitch_levels:
        return ds
    rows = [i for i in range(len(ds))
            if ds.labels[i] in cfg.pitch_categories and not ds.synthetic[i]]
    if not rows:
        return ds
    if ds.audio is None or ds.sample_rate is None or any(ds.audio[i] is None for i in rows):
        missing = next((i for i in rows if ds.audio is None or ds.audio[i] is None), rows[0])
        raise ValueError(f"row {missing} ({ds.labels[missing]}) has no audio for pitch-shifting")
    prev_rows = _previous_rows(ds)
    cols = [FEATURE_NAMES.index(n) for n in ds.feature_names]

    full_cache = {}

    def full_vector(i):
        # canonical 49 values are needed for deltas even when ds holds a subset
        if i not in full_cache:
            if len(ds.feature_names) == len(FEATURE_NAMES):
                full_cache[i] = FeatureVector(ds.X[i])
            else:
                seg = StrokeSegment(ds.audio[i], ds.sample_rate, 0.0,
                                    max(len(ds.audio[i]), 1) / ds.sample_rate)
                prev = full_vector(prev_rows[i]) if prev_rows[i] >= 0 else None
                full_cache[i] = extract_features(seg, prev, analysis)
        return full_cache[i]

    new_X, parents = [], []
    for i in rows:
        audio = ds.audio[i]
        prev = full_vector(prev_rows[i]) if prev_rows[i] >= 0 else None
        for level in cfg.pitch_levels:
            shifted = pitch_shift(audio, ds.sample_rate, level)
            seg = StrokeSegment(shifted, ds.sample_rate, 0.0, len(shifted) / ds.sample_rate)
            fv = extract_features(seg, prev, analysis)
            new_X.append(fv.values[cols])
            parents.append(i)
    return ds.append_rows(np.array(new_X), parents)


def _balance_targets(ds):
    counts = ds.counts()
    if not counts:
        raise ValueError("cannot balance an empty dataset")
    return counts, max(counts.values())


def oversample_repeat(ds: StrokeDataset) -> StrokeDataset:
    """Cyclically duplicate minority-class rows up to the majority count."""
    counts, majority = _balance_targets(ds)
    parents = []
    for c in CLASSES:
        if c not in counts or counts[c] == majority:
            continue
        members = np.flatnonzero(ds.labels == c)
        extra = majority - members.size
        parents.extend(members[np.arange(extra) % members.size].tolist())
    if not parents:
        return ds
    return ds.append_rows(ds.X[parents], parents)


def _neighbours(Z, k):
    """Indices of the ``k`` nearest other rows of ``Z`` (Euclidean)."""
    n = Z.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    sq = np.sum(Z * Z, axis=1)
    for start in range(0, n, 512):
        block = Z[start:start + 512]
        d = sq[start:start + 512, None] + sq[None, :] - 2.0 * block @ Z.T
        d[np.arange(block.shape[0]), np.arange(start, start + block.shape[0])] = np.inf
        out[start:start + block.shape[0]] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


def smote(ds: StrokeDataset, cfg: AugmentConfig = AugmentConfig(), seed=0) -> StrokeDataset:
    """Balance by interpolating towards same-class nearest neighbours.

    Neighbours are found on features z-scored over ``ds``; new points are
    ``x + u * (x_nn - x)`` with ``u ~ U[0, 1]``.
    """
    counts, majority = _balance_targets(ds)
    mean = ds.X.mean(axis=0)
    std = ds.X.std(axis=0)
    std[std == 0] = 1.0
    Z = (ds.X - mean) / std

    new_X, parents = [], []
    for ci, c in enumerate(CLASSES):
        if c not in counts or counts[c] == majority:
            continue
        members = np.flatnonzero(ds.labels == c)
        needed = majority - members.size
        if members.size < 2:
            warnings.warn(f"class {c} has a single row; repeating it instead of SMOTE")
            new_X.append(np.repeat(ds.X[members], needed, axis=0))
            parents.extend([int(members[0])] * needed)
            continue
        k = min(cfg.smote_k, members.size - 1)
        nn = _neighbours(Z[members], k)
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), ci]))
        base = rng.integers(0, members.size, size=needed)
        pick = nn[base, rng.integers(0, k, size=needed)]
        u = rng.random(needed)[:, None]
        x = ds.X[members[base]]
        new_X.append(x + u * (ds.X[members[pick]] - x))
        parents.extend(members[base].tolist())
    if not parents:
        return ds
    return ds.append_rows(np.vstack(new_X), parents)


def apply_strategy(ds: StrokeDataset, cfg: AugmentConfig, seed=0,
                   analysis: AnalysisConfig = DEFAULT_CONFIG) -> StrokeDataset:
    strategy = cfg.strategy
    if strategy.startswith("pitch"):
        ds = augment_pitch(ds, cfg, analysis)
    if strategy.endswith("oversample"):
        ds = oversample_repeat(ds)
    elif strategy.endswith("smote"):
        ds = smote(ds, cfg, seed)
    return ds
