"""Short-time analysis primitives on a fixed 25 ms / 5 ms frame grid."""

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.fft

from .audio_io import AudioClip


@dataclass(frozen=True)
class AnalysisConfig:
    window_ms: float = 25.0
    hop_ms: float = 5.0
    n_mel_bands: int = 40
    n_mfcc: int = 13
    mel_fmin: float = 0.0
    mel_fmax: Optional[float] = None  # None means Nyquist
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.hop_ms <= 0 or self.window_ms <= 0:
            raise ValueError("window_ms and hop_ms must be positive")
        if self.hop_ms > self.window_ms:
            raise ValueError("hop_ms must not exceed window_ms")
        if self.n_mfcc > self.n_mel_bands:
            raise ValueError("n_mfcc must not exceed n_mel_bands")

    def win_length(self, sample_rate):
        return int(round(self.window_ms * sample_rate / 1000.0))

    def hop_length(self, sample_rate):
        return int(round(self.hop_ms * sample_rate / 1000.0))

    def fft_size(self, sample_rate):
        n = 1
        while n < self.win_length(sample_rate):
            n <<= 1
        return n


DEFAULT_CONFIG = AnalysisConfig()


@dataclass(frozen=True)
class Band:
    low_hz: float
    high_hz: float

    def __post_init__(self):
        if not 0 <= self.low_hz < self.high_hz:
            raise ValueError(f"invalid band {self.low_hz}-{self.high_hz} Hz")

    def __str__(self):
        return f"{self.low_hz:g}-{self.high_hz:g} Hz"


BASS = Band(50.0, 200.0)
TREBLE = Band(200.0, 2000.0)


@dataclass(frozen=True)
class Spectrogram:
    frames: np.ndarray      # (n_frames, n_bins) magnitudes
    bin_hz: float
    frame_times: np.ndarray  # seconds, frame centers
    sample_rate: int

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def bin_freqs(self):
        return np.arange(self.frames.shape[1]) * self.bin_hz


def _samples_of(clip):
    if isinstance(clip, AudioClip):
        return clip.samples, clip.sample_rate
    raise TypeError("expected an AudioClip")


@lru_cache(maxsize=8)
def _hann(n):
    # periodic Hann, as used for spectral analysis
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(clip: AudioClip, cfg: AnalysisConfig = DEFAULT_CONFIG, window=True):
    """Slice ``clip`` into analysis frames, shape ``(n_frames, win_length)``.

    Clips shorter than one window are zero-padded to a single frame.
    With ``window=False`` the raw samples are returned (for ZCR).
    """
    x, sr = _samples_of(clip)
    win = cfg.win_length(sr)
    hop = cfg.hop_length(sr)
    if x.size < win:
        x = np.concatenate([x, np.zeros(win - x.size)])
    n_frames = (x.size - win) // hop + 1
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[::hop][:n_frames]
    if window:
        return frames * _hann(win)
    return frames.copy()


def magnitude_spectrogram(frames, sample_rate, cfg: AnalysisConfig = DEFAULT_CONFIG):
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[0] == 0:
        raise ValueError("no frames to analyse")
    n_fft = cfg.fft_size(sample_rate)
    mags = np.abs(scipy.fft.rfft(frames, n=n_fft, axis=1))
    hop = cfg.hop_length(sample_rate)
    times = (np.arange(frames.shape[0]) * hop + frames.shape[1] / 2.0) / sample_rate
    return Spectrogram(mags, sample_rate / n_fft, times, sample_rate)


def spectrogram(clip: AudioClip, cfg: AnalysisConfig = DEFAULT_CONFIG) -> Spectrogram:
    return magnitude_spectrogram(frame_signal(clip, cfg), clip.sample_rate, cfg)


def band_bins(spec: Spectrogram, band: Band):
    nyquist = spec.sample_rate / 2.0
    if band.high_hz > nyquist:
        raise ValueError(f"band {band} exceeds Nyquist ({nyquist:g} Hz)")
    freqs = spec.bin_freqs
    mask = (freqs >= band.low_hz) & (freqs < band.high_hz)
    if not mask.any():
        raise ValueError(f"band {band} contains no spectral bins")
    return mask


def band_energy(spec: Spectrogram, band: Band):
    """Per-frame sum of squared magnitudes over the bins inside ``band``."""
    mask = band_bins(spec, band)
    sub = spec.frames[:, mask]
    return np.sum(sub * sub, axis=1)


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(sample_rate, n_fft, n_bands, fmin=0.0, fmax=None):
    """Triangular mel filters, shape ``(n_bands, n_fft // 2 + 1)``."""
    if fmax is None:
        fmax = sample_rate / 2.0
    edges = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_bands + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    fb = np.zeros((n_bands, freqs.size))
    for m in range(n_bands):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (freqs - lo) / (mid - lo)
        falling = (hi - freqs) / (hi - mid)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


def mfcc(spec: Spectrogram, cfg: AnalysisConfig = DEFAULT_CONFIG):
    """MFCCs from power mel energies: ``(n_frames, n_mfcc)``."""
    if cfg.n_mel_bands < cfg.n_mfcc:
        raise ValueError("n_mel_bands must be at least n_mfcc")
    n_fft = 2 * (spec.frames.shape[1] - 1)
    fb = mel_filterbank(spec.sample_rate, n_fft, cfg.n_mel_bands, cfg.mel_fmin, cfg.mel_fmax)
    mel = (spec.frames ** 2) @ fb.T
    return mel_cepstrum(mel, cfg)


def mel_cepstrum(mel_energies, cfg: AnalysisConfig = DEFAULT_CONFIG):
    logmel = np.log(np.maximum(mel_energies, cfg.log_floor))
    return scipy.fft.dct(logmel, type=2, norm="ortho", axis=-1)[..., :cfg.n_mfcc]


def spectral_shape(row, bin_hz):
    """Centroid (Hz), skewness and kurtosis of one magnitude spectrum.

    Returns ``(0, 0, 0)`` for an empty spectrum and ``(centroid, 0, 0)``
    when the distribution has zero variance.
    """
    c, s, k = spectral_shape_frames(np.atleast_2d(row), bin_hz)
    return float(c[0]), float(s[0]), float(k[0])


def spectral_shape_frames(mags, bin_hz):
    mags = np.asarray(mags, dtype=np.float64)
    freqs = np.arange(mags.shape[1]) * bin_hz
    total = mags.sum(axis=1)
    nonzero = total > 0
    p = np.zeros_like(mags)
    p[nonzero] = mags[nonzero] / total[nonzero, None]
    centroid = p @ freqs
    dev = freqs[None, :] - centroid[:, None]
    var = np.sum(p * dev ** 2, axis=1)
    m3 = np.sum(p * dev ** 3, axis=1)
    m4 = np.sum(p * dev ** 4, axis=1)
    # relative threshold: var below resolvable precision counts as zero
    ok = nonzero & (var > 1e-12 * bin_hz * bin_hz)
    skew = np.zeros_like(var)
    kurt = np.zeros_like(var)
    skew[ok] = m3[ok] / var[ok] ** 1.5
    kurt[ok] = m4[ok] / var[ok] ** 2
    return centroid, skew, kurt


def zero_crossing_rate(frames):
    """Fraction of adjacent sample pairs with a strict sign change, per frame."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[1] < 2:
        raise ValueError("frames need at least two samples")
    changes = (frames[:, :-1] * frames[:, 1:]) < 0
    return changes.mean(axis=1)


def amplitude_envelope(clip: AudioClip, cfg: AnalysisConfig = DEFAULT_CONFIG):
    """Moving RMS of the signal on the hop grid.

    Envelope sample ``i`` covers one hop centred at ``i * hop``; returns the
    envelope and its sample period in seconds.
    """
    x, sr = _samples_of(clip)
    hop = cfg.hop_length(sr)
    if x.size == 0:
        raise ValueError("empty clip")
    half = hop // 2
    n_env = 1 + x.size // hop
    padded = np.zeros(n_env * hop + hop)
    padded[half:half + x.size] = x
    blocks = padded[:n_env * hop].reshape(n_env, hop)
    env = np.sqrt(np.mean(blocks * blocks, axis=1))
    return env, hop / sr
