"""WAV ingestion and band-limited resampling.

Every downstream stage works on mono audio at :data:`WORKING_RATE`.
"""

import os
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import i0

WORKING_RATE = 16000

# Kernel half-width in input samples; the full kernel spans 64 taps.
_HALF_TAPS = 32
_KAISER_BETA = 8.6
_CUTOFF_MARGIN = 0.95
_CHUNK = 1 << 15

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_FLOAT = 3
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class WavFormatError(ValueError):
    """Raised for malformed or unsupported WAV files."""


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    source_path: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def _parse_fmt(body, path):
    if len(body) < 16:
        raise WavFormatError(f"{path}: fmt chunk too short ({len(body)} bytes)")
    audio_format, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", body[:16])
    if audio_format == _WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 26:
            raise WavFormatError(f"{path}: extensible fmt chunk missing SubFormat")
        audio_format = struct.unpack("<H", body[24:26])[0]
    if audio_format not in (_WAVE_FORMAT_PCM, _WAVE_FORMAT_FLOAT):
        raise WavFormatError(
            f"{path}: unsupported audio_format={audio_format} (supported: 1=PCM, 3=IEEE float)")
    if channels not in (1, 2):
        raise WavFormatError(f"{path}: unsupported channels={channels} (supported: 1, 2)")
    if audio_format == _WAVE_FORMAT_PCM and bits != 16:
        raise WavFormatError(f"{path}: unsupported bits_per_sample={bits} for PCM (supported: 16)")
    if audio_format == _WAVE_FORMAT_FLOAT and bits != 32:
        raise WavFormatError(
            f"{path}: unsupported bits_per_sample={bits} for IEEE float (supported: 32)")
    if rate == 0:
        raise WavFormatError(f"{path}: invalid sample_rate=0")
    if block_align != channels * bits // 8:
        raise WavFormatError(f"{path}: inconsistent block_align={block_align}")
    return audio_format, channels, rate


def load_wav(path) -> AudioClip:
    """Read a PCM16 or float32 WAV file as a mono clip in [-1, 1].

    Stereo input is averaged to mono.
    """
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise WavFormatError(f"{path}: cannot read file ({exc.strerror})") from exc
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file (bad RIFF header)")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        size = struct.unpack("<I", raw[pos + 4:pos + 8])[0]
        body = raw[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            fmt = _parse_fmt(body, path)
        elif chunk_id == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavFormatError(f"{path}: missing fmt chunk")
    if data is None:
        raise WavFormatError(f"{path}: missing data chunk")

    audio_format, channels, rate = fmt
    if audio_format == _WAVE_FORMAT_PCM:
        n = len(data) // 2
        values = np.frombuffer(data[:n * 2], dtype="<i2").astype(np.float64) / 32768.0
    else:
        n = len(data) // 4
        values = np.frombuffer(data[:n * 4], dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(values)):
            raise WavFormatError(f"{path}: data chunk contains non-finite float samples")
        values = np.clip(values, -1.0, 1.0)
    frames = values.size // channels
    values = values[:frames * channels].reshape(frames, channels).mean(axis=1)
    return AudioClip(values, rate, source_path=path)


def write_wav(path, clip: AudioClip, sample_format="pcm16"):
    """Write ``clip`` as mono WAV, either ``"pcm16"`` or ``"float32"``."""
    x = np.clip(clip.samples, -1.0, 1.0)
    if sample_format == "pcm16":
        payload = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
        audio_format, bits = _WAVE_FORMAT_PCM, 16
    elif sample_format == "float32":
        payload = x.astype("<f4").tobytes()
        audio_format, bits = _WAVE_FORMAT_FLOAT, 32
    else:
        raise ValueError(f"unknown sample_format {sample_format!r}")
    block_align = bits // 8
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, audio_format, 1, clip.sample_rate,
                                    clip.sample_rate * block_align, block_align, bits)
    header += b"data" + struct.pack("<I", len(payload))
    with open(path, "wb") as fh:
        fh.write(header + payload)


_WINDOW_GRID = np.linspace(-_HALF_TAPS, _HALF_TAPS, 64 * 1024 + 1)
_WINDOW_TABLE = i0(_KAISER_BETA * np.sqrt(1.0 - (_WINDOW_GRID / _HALF_TAPS) ** 2)) / i0(_KAISER_BETA)


def _kaiser(d):
    # nearest entry of a 1/1024-sample table
    k = np.rint((d + _HALF_TAPS) * 1024.0).astype(np.int64)
    return _WINDOW_TABLE[np.clip(k, 0, _WINDOW_TABLE.size - 1)]


def sinc_resample(x, n_out, ratio=None):
    """Windowed-sinc interpolation of ``x`` onto ``n_out`` evenly spaced points.

    ``ratio`` is output rate over input rate; it defaults to ``n_out / len(x)``
    and sets the anti-aliasing cutoff when below one.
    """
    x = np.asarray(x, dtype=np.float64)
    n_in = x.size
    if n_out <= 0 or n_in == 0:
        return np.zeros(max(n_out, 0))
    if ratio is None:
        ratio = n_out / n_in
    cutoff = _CUTOFF_MARGIN * min(1.0, ratio)
    step = 1.0 / ratio
    offsets = np.arange(-_HALF_TAPS + 1, _HALF_TAPS + 1)
    padded = np.concatenate([np.zeros(_HALF_TAPS), x, np.zeros(_HALF_TAPS + 1)])
    out = np.empty(n_out)
    for start in range(0, n_out, _CHUNK):
        j = np.arange(start, min(start + _CHUNK, n_out))
        pos = j * step
        base = np.floor(pos).astype(np.int64)
        idx = base[:, None] + offsets[None, :]
        d = pos[:, None] - idx
        w = cutoff * np.sinc(cutoff * d) * _kaiser(d)
        w /= w.sum(axis=1, keepdims=True)
        out[j] = np.sum(w * padded[idx + _HALF_TAPS], axis=1)
    return out


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited resample of ``clip`` to ``target_rate`` Hz."""
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate!r}")
    if target_rate == clip.sample_rate:
        return clip
    n_out = int(round(len(clip) * target_rate / clip.sample_rate))
    y = sinc_resample(clip.samples, n_out, ratio=target_rate / clip.sample_rate)
    return AudioClip(np.clip(y, -1.0, 1.0), target_rate, source_path=clip.source_path)


def to_working_rate(clip: AudioClip, rate: int = WORKING_RATE) -> AudioClip:
    return resample(clip, rate)
