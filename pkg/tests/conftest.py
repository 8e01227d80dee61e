import numpy as np
import pytest
from hypothesis import settings

from tablascribe.audio_io import AudioClip
from oracles import fft_peak_hz as peak_hz  # noqa: F401

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

SR = 16000


def tone(freq, seconds=1.0, sr=SR, amp=0.5, phase=0.0, decay=None):
    t = np.arange(int(round(seconds * sr))) / sr
    y = amp * np.sin(2 * np.pi * freq * t + phase)
    if decay is not None:
        y *= np.exp(-t / decay)
    return y


def clip_of(samples, sr=SR):
    return AudioClip(samples, sr)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
