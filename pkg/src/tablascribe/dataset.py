"""Labelled stroke datasets: feature rows plus grouping metadata."""

import csv
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .audio_io import AudioClip
from .dsp import DEFAULT_CONFIG, AnalysisConfig
from .features import FEATURE_NAMES, extract_track, segment_strokes
from .labels import CLASSES

META_COLUMNS = ("label", "tabla_set", "track", "stroke_index", "synthetic")


@dataclass
class StrokeDataset:
    X: np.ndarray
    labels: np.ndarray
    tabla_set: np.ndarray
    track: np.ndarray
    stroke_index: np.ndarray
    synthetic: np.ndarray
    feature_names: tuple = FEATURE_NAMES
    audio: Optional[list] = None
    sample_rate: Optional[int] = None
    # row this one was derived from, -1 for original rows
    parent: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.labels)
        self.X = np.asarray(self.X, dtype=np.float64).reshape(n, len(self.feature_names))
        self.labels = np.asarray(self.labels, dtype=object)
        self.tabla_set = np.asarray(self.tabla_set, dtype=object)
        self.track = np.asarray(self.track, dtype=object)
        self.stroke_index = np.asarray(self.stroke_index, dtype=np.int64)
        self.synthetic = np.asarray(self.synthetic, dtype=bool)
        if self.parent is None:
            self.parent = np.full(n, -1, dtype=np.int64)
        self.parent = np.asarray(self.parent, dtype=np.int64)
        bad = set(self.labels.tolist()) - set(CLASSES)
        if bad:
            raise ValueError(f"unknown labels {sorted(bad)}")
        if any(not s for s in self.tabla_set.tolist()):
            raise ValueError("tabla_set must be a nonempty string")
        if self.audio is not None and len(self.audio) != n:
            raise ValueError("audio list length differs from row count")

    def __len__(self):
        return len(self.labels)

    @classmethod
    def empty(cls, feature_names=FEATURE_NAMES):
        return cls(np.zeros((0, len(feature_names))), [], [], [], [], [],
                   feature_names=tuple(feature_names))

    def counts(self):
        return {c: int(np.sum(self.labels == c)) for c in CLASSES if np.any(self.labels == c)}

    def subset(self, rows):
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        audio = None if self.audio is None else [self.audio[i] for i in rows]
        # parents outside the subset become unknown
        remap = np.full(len(self), -1, dtype=np.int64)
        remap[rows] = np.arange(rows.size)
        parent = np.where(self.parent[rows] >= 0, remap[np.maximum(self.parent[rows], 0)], -1)
        return replace(self, X=self.X[rows], labels=self.labels[rows],
                       tabla_set=self.tabla_set[rows], track=self.track[rows],
                       stroke_index=self.stroke_index[rows], synthetic=self.synthetic[rows],
                       audio=audio, parent=parent)

    def select_features(self, names):
        idx = [self.feature_names.index(n) for n in names]
        return replace(self, X=self.X[:, idx], feature_names=tuple(names))

    def append_rows(self, X, parents, labels=None):
        """New synthetic rows copying metadata from their ``parents``."""
        parents = np.asarray(parents, dtype=np.int64)
        if parents.size == 0:
            return self
        X = np.asarray(X, dtype=np.float64).reshape(parents.size, len(self.feature_names))
        new_labels = self.labels[parents] if labels is None else np.asarray(labels, dtype=object)
        audio = None if self.audio is None else self.audio + [None] * parents.size
        return replace(
            self,
            X=np.vstack([self.X, X]),
            labels=np.concatenate([self.labels, new_labels]),
            tabla_set=np.concatenate([self.tabla_set, self.tabla_set[parents]]),
            track=np.concatenate([self.track, self.track[parents]]),
            stroke_index=np.concatenate([self.stroke_index, self.stroke_index[parents]]),
            synthetic=np.concatenate([self.synthetic, np.ones(parents.size, dtype=bool)]),
            audio=audio,
            parent=np.concatenate([self.parent, parents]),
        )


def concat(datasets):
    datasets = [d for d in datasets if len(d)]
    if not datasets:
        raise ValueError("nothing to concatenate")
    names = datasets[0].feature_names
    if any(d.feature_names != names for d in datasets):
        raise ValueError("datasets have different feature sets")
    has_audio = all(d.audio is not None for d in datasets)
    offsets = np.cumsum([0] + [len(d) for d in datasets[:-1]])
    parent = np.concatenate([np.where(d.parent >= 0, d.parent + off, -1)
                             for d, off in zip(datasets, offsets)])
    rates = {d.sample_rate for d in datasets}
    return StrokeDataset(
        np.vstack([d.X for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        np.concatenate([d.tabla_set for d in datasets]),
        np.concatenate([d.track for d in datasets]),
        np.concatenate([d.stroke_index for d in datasets]),
        np.concatenate([d.synthetic for d in datasets]),
        feature_names=names,
        audio=sum((d.audio for d in datasets), []) if has_audio else None,
        sample_rate=rates.pop() if len(rates) == 1 else None,
        parent=parent,
    )


def track_dataset(clip: AudioClip, onsets, labels, tabla_set, track_id,
                  cfg: AnalysisConfig = DEFAULT_CONFIG, keep_audio=True):
    """Segment one annotated track and extract its feature rows."""
    segments = segment_strokes(onsets, clip, labels)
    vectors = extract_track(segments, cfg)
    n = len(segments)
    X = np.array([v.values for v in vectors]).reshape(n, len(FEATURE_NAMES))
    return StrokeDataset(
        X, list(labels), [tabla_set] * n, [track_id] * n, np.arange(n), np.zeros(n, dtype=bool),
        audio=[s.samples for s in segments] if keep_audio else None,
        sample_rate=clip.sample_rate,
    )


def write_csv(ds: StrokeDataset, path):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(ds.feature_names) + list(META_COLUMNS))
        for i in range(len(ds)):
            w.writerow([repr(float(v)) for v in ds.X[i]]
                       + [ds.labels[i], ds.tabla_set[i], ds.track[i], int(ds.stroke_index[i]),
                          int(ds.synthetic[i])])
    os.replace(tmp, path)


def read_csv(path) -> StrokeDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty dataset file")
    header = rows[0]
    n_meta = len(META_COLUMNS)
    if tuple(header[-n_meta:]) != META_COLUMNS:
        raise ValueError(f"{path}: header must end with {','.join(META_COLUMNS)}")
    names = tuple(header[:-n_meta])
    body = [r for r in rows[1:] if r]
    X = np.array([[float(v) for v in r[:len(names)]] for r in body]).reshape(len(body), len(names))
    meta = list(zip(*[r[len(names):] for r in body])) if body else [()] * n_meta
    return StrokeDataset(X, list(meta[0]), list(meta[1]), list(meta[2]),
                         [int(v) for v in meta[3]], [v == "1" for v in meta[4]],
                         feature_names=names)
