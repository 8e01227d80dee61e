"""Stroke transcription for tabla and similar pitched percussion."""

from .audio_io import AudioClip, WavFormatError, load_wav, resample, write_wav
from .forest import ForestModel, ForestParams, load_model, save_model, train_forest
from .labels import CLASSES, normalize_label
from .onset import OnsetConfig, detect_onsets

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "WavFormatError", "load_wav", "resample", "write_wav",
    "ForestModel", "ForestParams", "load_model", "save_model", "train_forest",
    "CLASSES", "normalize_label", "OnsetConfig", "detect_onsets",
]
