import numpy as np
import pytest
import scipy.fft
from hypothesis import given
from hypothesis import strategies as st

from tablascribe.dsp import (BASS, DEFAULT_CONFIG, TREBLE, AnalysisConfig, Band,
                             amplitude_envelope, band_energy, frame_signal,
                             magnitude_spectrogram, mel_cepstrum, mel_filterbank, mfcc,
                             spectral_shape, spectrogram, zero_crossing_rate)
from conftest import SR, clip_of, tone


def test_config_sizes():
    cfg = DEFAULT_CONFIG
    assert (cfg.win_length(SR), cfg.hop_length(SR), cfg.fft_size(SR)) == (400, 80, 512)
    assert spectrogram(clip_of(np.zeros(400))).bin_hz == 31.25
    with pytest.raises(ValueError):
        AnalysisConfig(window_ms=5.0, hop_ms=10.0)
    with pytest.raises(ValueError):
        AnalysisConfig(n_mel_bands=10, n_mfcc=13)


def test_frame_counts():
    assert frame_signal(clip_of(np.zeros(16000))).shape == (196, 400)
    assert frame_signal(clip_of(np.zeros(400))).shape == (1, 400)
    assert frame_signal(clip_of(np.ones(10))).shape == (1, 400)


def test_constant_signal_frames_equal_window():
    frames = frame_signal(clip_of(np.ones(1200)))
    hann = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(400) / 400)
    assert np.allclose(frames, hann[None, :])


def test_frame_times_are_centres():
    spec = spectrogram(clip_of(np.zeros(800)))
    np.testing.assert_allclose(spec.frame_times, (np.arange(spec.n_frames) * 80 + 200) / SR)


def test_zero_frame_gives_zero_spectrum():
    spec = magnitude_spectrogram(np.zeros((2, 400)), SR)
    assert spec.frames.shape == (2, 257)
    assert not spec.frames.any()


def test_tone_argmax_bin():
    spec = spectrogram(clip_of(tone(1000.0, 0.2)))
    assert np.all(np.abs(spec.frames.argmax(axis=1) - 1000.0 / spec.bin_hz) <= 1)


def test_parseval(rng):
    frames = frame_signal(clip_of(rng.normal(size=4000) * 0.1))
    spec = magnitude_spectrogram(frames, SR)
    full = np.abs(scipy.fft.fft(frames, n=512, axis=1)) ** 2
    np.testing.assert_allclose(full.sum(axis=1) / 512, np.sum(frames ** 2, axis=1), rtol=1e-6)
    # the one-sided spectrum carries the same energy once mirrored bins are doubled
    one_sided = spec.frames ** 2
    total = one_sided[:, 0] + one_sided[:, -1] + 2 * one_sided[:, 1:-1].sum(axis=1)
    np.testing.assert_allclose(total / 512, np.sum(frames ** 2, axis=1), rtol=1e-6)


def _band_db(freq):
    spec = spectrogram(clip_of(tone(freq, 0.3)))
    total = np.sum(spec.frames ** 2, axis=1)
    return spec, total, band_energy(spec, BASS), band_energy(spec, TREBLE)


def test_bass_tone_band_split():
    _, total, bass, treble = _band_db(100.0)
    # both mirror halves included in total; dc/nyquist are ~0 here
    assert np.all(bass > 0.9 * total)
    assert np.all(10 * np.log10(bass / treble) >= 30)


def test_treble_tone_band_split():
    _, _, bass, treble = _band_db(300.0)
    assert np.all(10 * np.log10(treble / bass) >= 30)


def test_band_partition_additivity(rng):
    spec = spectrogram(clip_of(rng.normal(size=3000) * 0.2))
    full = band_energy(spec, Band(0.0, SR / 2))
    edges = [0.0, 50.0, 200.0, 2000.0, 5000.0, SR / 2]
    parts = sum(band_energy(spec, Band(a, b)) for a, b in zip(edges[:-1], edges[1:]))
    np.testing.assert_allclose(parts, full, rtol=1e-9)


def test_band_errors():
    spec = spectrogram(clip_of(np.zeros(400)))
    with pytest.raises(ValueError, match="no spectral bins"):
        band_energy(spec, Band(100.0, 110.0))
    with pytest.raises(ValueError, match="Nyquist"):
        band_energy(spec, Band(100.0, 9000.0))
    assert not band_energy(spec, BASS).any()


def test_mel_filterbank_shape():
    fb = mel_filterbank(SR, 512, 40)
    assert fb.shape == (40, 257)
    assert fb.min() >= 0 and fb.max() <= 1
    assert np.all(fb.sum(axis=1) > 0)


def test_flat_mel_energies_give_c0_only():
    c = mel_cepstrum(np.full((1, 40), 3.0))
    assert c[0, 0] == pytest.approx(np.log(3.0) * np.sqrt(40))
    assert np.all(np.abs(c[0, 1:]) < 1e-9)


def test_zero_frame_mfcc_is_floor_constant():
    spec = spectrogram(clip_of(np.zeros(400)))
    c = mfcc(spec)
    assert c.shape == (1, 13)
    assert c[0, 0] == pytest.approx(np.log(1e-10) * np.sqrt(40))
    assert np.all(np.abs(c[0, 1:]) < 1e-9)


def test_mfcc_gain_shifts_c0_only(rng):
    x = rng.normal(size=4000) * 0.1
    a = mfcc(spectrogram(clip_of(x)))
    b = mfcc(spectrogram(clip_of(2 * x)))
    np.testing.assert_allclose(b[:, 1:], a[:, 1:], atol=1e-6)
    np.testing.assert_allclose(b[:, 0] - a[:, 0], np.log(4.0) * np.sqrt(40), atol=1e-6)


def test_spectral_shape_two_points():
    row = np.zeros(257)
    bin_hz = 100.0
    row[1] = row[3] = 1.0
    c, s, k = spectral_shape(row, bin_hz)
    assert c == pytest.approx(200.0)
    assert s == pytest.approx(0.0, abs=1e-12)
    assert k == pytest.approx(1.0)


def test_spectral_shape_sentinels():
    row = np.zeros(10)
    assert spectral_shape(row, 31.25) == (0.0, 0.0, 0.0)
    row[4] = 2.0
    assert spectral_shape(row, 31.25) == (125.0, 0.0, 0.0)


@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=3, max_size=40))
def test_spectral_shape_matches_direct_moments(mags):
    m = np.array(mags)
    c, s, k = spectral_shape(m, 10.0)
    if m.sum() == 0:
        assert (c, s, k) == (0.0, 0.0, 0.0)
        return
    f = np.arange(m.size) * 10.0
    p = m / m.sum()
    mu = np.sum(p * f)
    var = np.sum(p * (f - mu) ** 2)
    assert c == pytest.approx(mu, rel=1e-9, abs=1e-9)
    if var > 1e-6:
        assert s == pytest.approx(np.sum(p * (f - mu) ** 3) / var ** 1.5, rel=1e-6, abs=1e-9)
        assert k == pytest.approx(np.sum(p * (f - mu) ** 4) / var ** 2, rel=1e-6)


def test_zcr_cases():
    assert zero_crossing_rate(np.array([[1.0, -1.0] * 200]))[0] == 1.0
    assert zero_crossing_rate(np.full((1, 400), 0.3))[0] == 0.0
    frames = frame_signal(clip_of(tone(1000.0, 0.2, phase=0.3)), window=False)
    rate = zero_crossing_rate(frames)
    assert np.all(np.abs(rate - 0.125) <= 0.01)
    with pytest.raises(ValueError):
        zero_crossing_rate(np.ones((1, 1)))


def test_envelope_cases():
    env, hop_s = amplitude_envelope(clip_of(np.zeros(1000)))
    assert hop_s == 0.005 and not env.any()
    env, _ = amplitude_envelope(clip_of(np.full(1600, 0.5)))
    np.testing.assert_allclose(env[1:-1], 0.5, atol=1e-12)
    assert env.min() >= 0


def test_decaying_tone_envelope_monotone_after_peak():
    x = tone(1000.0, 0.5, decay=0.05)
    env, _ = amplitude_envelope(clip_of(x))
    peak = int(np.argmax(env))
    tail = env[peak + 1:-1]
    assert np.all(np.diff(tail) <= 1e-12)


@given(st.integers(1, 5000))
def test_envelope_length(n):
    env, _ = amplitude_envelope(clip_of(np.ones(n)))
    assert env.size == 1 + n // 80
    assert np.all(np.isfinite(env)) and env.min() >= 0


@given(st.integers(400, 6000), st.integers(0, 2 ** 31 - 1))
def test_spectrogram_nonnegative_finite(n, seed):
    x = np.random.default_rng(seed).uniform(-1, 1, n)
    spec = spectrogram(clip_of(x))
    assert spec.n_frames == (n - 400) // 80 + 1
    assert np.all(np.isfinite(spec.frames)) and spec.frames.min() >= 0
