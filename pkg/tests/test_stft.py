import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from dsp.audio import Waveform
from dsp.stft import (
    ComplexSpectrogram, StftConfig, consistency_project, consistency_project_tensor, istft, istft_tensor,
    stft, stft_tensor,
)
from utils.errors import ConfigError, InvalidInputError


def _loop_frame_count(n, win, hop):
    # explicit framing over the reflect-padded signal
    padded = n + 2 * (win // 2)
    count, start = 0, 0
    while start + win <= padded:
        count += 1
        start += hop
    return count


def test_one_second_of_zeros():
    X = stft(Waveform(np.zeros(16000)))
    assert X.values.shape == (101, 257)
    assert np.all(X.values == 0)


@pytest.mark.parametrize("n", [16000, 8000, 12345, 321])
def test_frame_count_matches_framing_loop(n):
    cfg = StftConfig()
    X = stft(Waveform(np.random.default_rng(0).standard_normal(n)), cfg)
    assert X.num_frames == _loop_frame_count(n, cfg.win_length, cfg.hop_length) == n // 160 + 1


def test_sinusoid_peaks_at_expected_bin():
    t = np.arange(16000) / 16000
    X = stft(Waveform(np.sin(2 * np.pi * 1000 * t)))
    peaks = np.argmax(np.abs(X.values), axis=1)
    assert np.all(peaks[1:-1] == 32)


def test_matches_direct_dft_oracle():
    cfg = StftConfig()
    x = np.random.default_rng(1).standard_normal(2000)
    X = stft(Waveform(x), cfg)
    win, hop = cfg.win_length, cfg.hop_length
    padded = np.pad(x, win // 2, mode="reflect")
    window = 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(win) / win)
    k = np.arange(cfg.n_bins)[:, None]
    n = np.arange(win)[None, :]
    basis = np.exp(-2j * np.pi * k * n / cfg.fft_size)
    for t in (0, 3, X.num_frames - 1):
        frame = padded[t * hop:t * hop + win] * window
        np.testing.assert_allclose(X.values[t], basis @ frame, atol=1e-9)


def test_perfect_reconstruction():
    x = np.random.default_rng(2).standard_normal(16000)
    y = istft(stft(Waveform(x)))
    assert len(y) == len(x)
    assert np.max(np.abs(y.samples - x)) < 1e-6


@pytest.mark.parametrize("n", [40, 45, 47])
def test_half_window_hop_reconstructs_the_tail(n):
    cfg = StftConfig(window_ms=1.0, hop_ms=0.5, fft_size=16)
    x = np.random.default_rng(n).standard_normal(n)
    y = istft(stft(Waveform(x), cfg), cfg)
    assert len(y) == n
    np.testing.assert_allclose(y.samples, x, atol=1e-6)


def test_hop_beyond_half_window_is_rejected():
    with pytest.raises(ConfigError):
        StftConfig(window_ms=20.0, hop_ms=15.0)


@given(st.floats(min_value=-5.0, max_value=5.0, allow_nan=False))
def test_istft_is_linear(a):
    x = np.random.default_rng(3).standard_normal(1600)
    X = stft(Waveform(x))
    scaled = ComplexSpectrogram(a * X.values, X.frame_hop, X.config, X.length)
    np.testing.assert_allclose(istft(scaled).samples, a * istft(X).samples, atol=1e-9)


def test_zero_spectrogram_inverts_to_zero():
    cfg = StftConfig()
    X = ComplexSpectrogram(np.zeros((11, 257), dtype=np.complex128), cfg.hop_length, cfg)
    y = istft(X)
    assert len(y) == 10 * 160
    assert np.all(y.samples == 0)


def test_consistent_spectrum_is_a_fixed_point():
    X = stft(Waveform(np.random.default_rng(4).standard_normal(4000)))
    np.testing.assert_allclose(consistency_project(X).values, X.values, atol=1e-6)


def test_projection_is_idempotent_and_moves_inconsistent_spectra():
    cfg = StftConfig()
    rng = np.random.default_rng(5)
    values = rng.standard_normal((26, 257)) + 1j * rng.standard_normal((26, 257))
    values[:, 0] = values[:, 0].real
    values[:, -1] = values[:, -1].real
    X = ComplexSpectrogram(values, cfg.hop_length, cfg, 4000)
    once = consistency_project(X)
    twice = consistency_project(once)
    assert np.linalg.norm(once.values - X.values) > 0
    np.testing.assert_allclose(twice.values, once.values, atol=1e-6)


def test_tensor_transforms_accept_batches():
    cfg = StftConfig()
    x = torch.randn(3, 1600, dtype=torch.float64)
    spec = stft_tensor(x, cfg)
    assert spec.shape == (3, 11, 257)
    torch.testing.assert_close(istft_tensor(spec, cfg, 1600), x, atol=1e-9, rtol=0)
    assert consistency_project_tensor(spec, cfg, 1600).shape == spec.shape


def test_errors():
    with pytest.raises(InvalidInputError):
        stft(Waveform(np.zeros(0)))
    with pytest.raises(InvalidInputError):
        stft(Waveform(np.zeros(100)))
    cfg = StftConfig()
    with pytest.raises(InvalidInputError):
        istft_tensor(torch.zeros(4, 100, dtype=torch.complex128), cfg)
