"""High-frequency-content onset detection, peak picking and evaluation."""

import csv
import itertools
import os
from dataclasses import dataclass

import numpy as np

from .audio_io import AudioClip
from .dsp import DEFAULT_CONFIG, AnalysisConfig, Spectrogram, spectrogram

MIN_GAP_S = 0.030


@dataclass(frozen=True)
class OnsetConfig:
    """Post-processing of the detection function.

    ``alpha`` thresholds the max-normalised, smoothed ODF; ``delay`` is the
    length in frames of the centred moving-average filter.
    """

    alpha: float = 0.1
    delay: int = 3
    tolerance_s: float = 0.050

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if int(self.delay) != self.delay or self.delay < 1:
            raise ValueError("delay must be an integer >= 1")
        if self.tolerance_s <= 0:
            raise ValueError("tolerance_s must be positive")


def hfc(spec: Spectrogram):
    """Bin-index weighted energy per frame: sum_k k * |X[k]|^2."""
    k = np.arange(spec.frames.shape[1], dtype=np.float64)
    return (spec.frames ** 2) @ k


def _check_onsets(times):
    times = np.asarray(times, dtype=np.float64).reshape(-1)
    if times.size and (np.any(times < 0) or np.any(np.diff(times) <= 0)):
        raise ValueError("onset times must be nonnegative and strictly increasing")
    return times


def smooth_and_pick(odf, frame_times, cfg: OnsetConfig = OnsetConfig(), min_gap_s=MIN_GAP_S):
    """Normalise, smooth and threshold ``odf`` into onset times (seconds)."""
    odf = np.asarray(odf, dtype=np.float64)
    frame_times = np.asarray(frame_times, dtype=np.float64)
    peak = odf.max() if odf.size else 0.0
    if peak <= 0:
        return np.zeros(0)
    s = odf / peak
    if cfg.delay > 1:
        s = np.convolve(s, np.ones(cfg.delay) / cfg.delay, mode="same")

    left = np.concatenate([[-np.inf], s[:-1]])
    right = np.concatenate([s[1:], [-np.inf]])
    # first frame of a plateau counts as the peak
    cand = np.flatnonzero((s > cfg.alpha) & (s > left) & (s >= right))

    # strongest first; earlier frame wins equal heights
    order = sorted(cand.tolist(), key=lambda i: (-s[i], i))
    accepted = []
    for i in order:
        t = frame_times[i]
        if all(abs(t - frame_times[j]) >= min_gap_s for j in accepted):
            accepted.append(i)
    return np.sort(frame_times[accepted])


def detect_onsets(clip: AudioClip, cfg: OnsetConfig = OnsetConfig(),
                  analysis: AnalysisConfig = DEFAULT_CONFIG):
    spec = spectrogram(clip, analysis)
    return smooth_and_pick(hfc(spec), spec.frame_times, cfg)


def match_onsets(pred, truth, tolerance_s=0.050):
    """One-to-one matching of sorted onset lists within ``tolerance_s``.

    Returns ``(hits, false_positives, false_negatives)``. On the line, the
    two-pointer sweep yields a maximum-cardinality matching.
    """
    pred = np.sort(np.asarray(pred, dtype=np.float64).reshape(-1))
    truth = np.sort(np.asarray(truth, dtype=np.float64).reshape(-1))
    i = j = hits = 0
    while i < pred.size and j < truth.size:
        d = pred[i] - truth[j]
        if abs(d) <= tolerance_s:
            hits += 1
            i += 1
            j += 1
        elif d < 0:
            i += 1
        else:
            j += 1
    return hits, pred.size - hits, truth.size - hits


def onset_prf(hits, fp, fn):
    p = hits / (hits + fp) if hits + fp else 0.0
    r = hits / (hits + fn) if hits + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def evaluate_onsets(pred, truth, tolerance_s=0.050):
    return onset_prf(*match_onsets(pred, truth, tolerance_s))


@dataclass
class GridResult:
    alpha: float
    delay: int
    table: dict  # (alpha, delay) -> mean f-score


def tune_grid(tracks, alpha_grid, delay_grid, tolerance_s=0.050,
              analysis: AnalysisConfig = DEFAULT_CONFIG):
    """Pick the (alpha, delay) pair with the best mean per-track f-score.

    ``tracks`` is a sequence of ``(clip, truth_onsets)``. Ties go to the
    higher alpha, then the smaller delay.
    """
    tracks = list(tracks)
    alpha_grid = list(alpha_grid)
    delay_grid = list(delay_grid)
    if not tracks or not alpha_grid or not delay_grid:
        raise ValueError("tuning needs nonempty tracks and grids")
    odfs = []
    for clip, truth in tracks:
        spec = spectrogram(clip, analysis)
        odfs.append((hfc(spec), spec.frame_times, np.asarray(truth, dtype=np.float64)))

    table = {}
    for alpha, delay in itertools.product(alpha_grid, delay_grid):
        cfg = OnsetConfig(alpha=alpha, delay=delay, tolerance_s=tolerance_s)
        scores = [evaluate_onsets(smooth_and_pick(odf, times, cfg), truth, tolerance_s)[2]
                  for odf, times, truth in odfs]
        table[(alpha, delay)] = float(np.mean(scores))
    best = max(table, key=lambda key: (table[key], key[0], -key[1]))
    return GridResult(best[0], best[1], table)


def read_annotations(path):
    """Read a ``time_sec[,label]`` CSV; returns ``(times, labels)``.

    ``labels`` holds ``None`` for rows without a label.
    """
    times, labels = [], []
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows and rows[0] and rows[0][0].strip().lower() in ("time_sec", "onset_sec", "time"):
        rows = rows[1:]
    for n, row in enumerate(rows, start=1):
        if not row or not row[0].strip():
            continue
        try:
            times.append(float(row[0]))
        except ValueError:
            raise ValueError(f"{path}: row {n}: bad onset time {row[0]!r}") from None
        labels.append(row[1].strip() if len(row) > 1 and row[1].strip() else None)
    order = np.argsort(times, kind="stable")
    times = np.asarray(times)[order]
    _check_onsets(times)
    return times, [labels[i] for i in order]


def write_onsets(path, times, labels=None):
    header = ["time_sec"] if labels is None else ["time_sec", "label"]
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, t in enumerate(times):
            w.writerow([f"{t:.6f}"] if labels is None else [f"{t:.6f}", labels[i]])
    os.replace(tmp, path)
