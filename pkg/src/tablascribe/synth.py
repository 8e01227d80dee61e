"""Synthetic tabla-like stroke corpora with exact ground truth.

Each simulated tabla set has its own bass and treble pitch and decay
rates. Damped strokes are short noise bursts; resonant strokes are decaying
harmonic tones on the bass drum, the treble drum, or both. Strokes are
overlap-added into tracks, so resonant tails ring into following strokes.
"""

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .audio_io import WORKING_RATE, AudioClip, write_wav
from .dataset import concat, track_dataset
from .dsp import DEFAULT_CONFIG
from .labels import CLASSES

TREBLE_PARTIALS = ((1.0, 1.0), (2.0, 0.5), (3.0, 0.3), (4.0, 0.15))
BASS_PARTIALS = ((1.0, 1.0), (2.0, 0.12))
RENDER_S = 1.6
GAP_RANGE_S = (0.15, 0.40)


@dataclass(frozen=True)
class TablaVoice:
    name: str
    bass_f0: float
    treble_f0: float
    bass_decay_s: float
    treble_decay_s: float
    treble_gain: float = 1.0


DEFAULT_SETS = (
    TablaVoice("set1", 85.0, 250.0, 0.30, 0.20),
    TablaVoice("set2", 95.0, 300.0, 0.25, 0.16),
    TablaVoice("set3", 105.0, 350.0, 0.35, 0.24),
)
TEST_VOICE = TablaVoice("test", 90.0, 325.0, 0.28, 0.18)


def shifted_sets(factor=0.2, which=0, sets=DEFAULT_SETS):
    """Copy of ``sets`` with one set's treble energy scaled by ``factor``."""
    out = list(sets)
    out[which] = replace(out[which], treble_gain=out[which].treble_gain * np.sqrt(factor))
    return tuple(out)


@dataclass
class SynthTrack:
    name: str
    tabla_set: str
    clip: AudioClip
    onsets: np.ndarray
    labels: list


def _partials(t, f0, partials, decay, rng):
    y = np.zeros_like(t)
    for ratio, amp in partials:
        phase = rng.uniform(0, 2 * np.pi)
        # higher partials die faster
        y += amp * np.sin(2 * np.pi * f0 * ratio * t + phase) * np.exp(-t * np.sqrt(ratio) / decay)
    return y


def synth_stroke(label, voice: TablaVoice, rng, sample_rate=WORKING_RATE, duration=RENDER_S):
    n = int(duration * sample_rate)
    t = np.arange(n) / sample_rate
    attack = 1.0 - np.exp(-t / 0.001)
    # every stroke starts with a broadband strike transient
    y = 0.8 * rng.normal(size=n) * np.exp(-t / rng.uniform(0.002, 0.004))
    if label == "D":
        tau = rng.uniform(0.008, 0.02)
        y += 0.6 * rng.normal(size=n) * np.exp(-t / tau)
        y += 0.6 * np.sin(2 * np.pi * voice.bass_f0 * 0.9 * t) * np.exp(-t / 0.015)
    if label in ("RT", "B"):
        f0 = voice.treble_f0 * rng.uniform(0.985, 1.015)
        decay = voice.treble_decay_s * rng.uniform(0.8, 1.25)
        y += voice.treble_gain * 0.6 * _partials(t, f0, TREBLE_PARTIALS, decay, rng) * attack
    if label in ("RB", "B"):
        f0 = voice.bass_f0 * rng.uniform(0.985, 1.015)
        decay = voice.bass_decay_s * rng.uniform(0.8, 1.25)
        y += 0.8 * _partials(t, f0, BASS_PARTIALS, decay, rng) * attack
    fade = np.ones(n)
    tail = int(0.1 * sample_rate)
    fade[-tail:] = np.linspace(1.0, 0.0, tail)
    return y * fade * rng.uniform(0.5, 1.0)


def synth_track(voice: TablaVoice, labels, rng, sample_rate=WORKING_RATE, name="track"):
    labels = list(labels)
    gaps = rng.uniform(*GAP_RANGE_S, size=max(len(labels) - 1, 0))
    onsets = 0.1 + np.concatenate([[0.0], np.cumsum(gaps)]) if labels else np.zeros(0)
    n = int((onsets[-1] + RENDER_S + 0.1) * sample_rate) if labels else sample_rate
    y = np.zeros(n)
    for onset, label in zip(onsets, labels):
        stroke = synth_stroke(label, voice, rng, sample_rate)
        a = int(round(onset * sample_rate))
        y[a:a + stroke.size] += stroke[:n - a]
    y += 1e-4 * rng.normal(size=n)
    # end the track shortly after the last stroke's nominal segment
    end = int((onsets[-1] + 0.6) * sample_rate) if labels else n
    y = y[:end]
    y *= 0.9 / max(np.abs(y).max(), 1e-9)
    return SynthTrack(name, voice.name, AudioClip(y, sample_rate), onsets, labels)


def synth_corpus(voices=DEFAULT_SETS, strokes_per_class=150, strokes_per_track=40, seed=0,
                 sample_rate=WORKING_RATE, class_counts=None):
    """Tracks for each voice holding ``strokes_per_class`` strokes of every class.

    ``class_counts`` overrides the per-class counts, e.g. ``{"D": 300, ...}``.
    """
    counts = class_counts or {c: strokes_per_class for c in CLASSES}
    tracks = []
    for vi, voice in enumerate(voices):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), vi]))
        labels = [c for c in CLASSES for _ in range(counts.get(c, 0))]
        labels = [labels[i] for i in rng.permutation(len(labels))]
        for ti, start in enumerate(range(0, len(labels), strokes_per_track)):
            chunk = labels[start:start + strokes_per_track]
            tracks.append(synth_track(voice, chunk, rng, sample_rate, f"{voice.name}_{ti:02d}"))
    return tracks


def corpus_dataset(tracks, cfg=DEFAULT_CONFIG, keep_audio=True):
    """Feature rows of synthetic tracks, segmented at their true onsets."""
    return concat([track_dataset(t.clip, t.onsets, t.labels, t.tabla_set, t.name, cfg,
                                 keep_audio) for t in tracks])


def write_corpus(directory, tracks, split="train", manifest_name="manifest.json"):
    """Write WAV + annotation CSV per track and a manifest; returns its path."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    for t in tracks:
        wav = f"{t.name}.wav"
        ann = f"{t.name}.csv"
        write_wav(os.path.join(directory, wav), t.clip)
        with open(os.path.join(directory, ann), "w") as fh:
            fh.write("time_sec,label\n")
            for onset, label in zip(t.onsets, t.labels):
                fh.write(f"{onset:.6f},{label}\n")
        entries.append({"audio_path": wav, "annotation_path": ann, "tabla_set": t.tabla_set,
                        "split": split})
    path = os.path.join(directory, manifest_name)
    existing = []
    if os.path.exists(path):
        with open(path) as fh:
            existing = json.load(fh).get("entries", [])
    with open(path, "w") as fh:
        json.dump({"entries": existing + entries}, fh, indent=2)
    return path
