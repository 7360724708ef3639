import numpy as np
import pytest
import scipy.fft
import torch

from dsp.audio import Waveform
from dsp.features import MfccConfig, dct_matrix, feature_statistics, log_mel_tensor, mel_filterbank, mfcc
from utils.errors import ConfigError, InvalidInputError


def test_one_second_frame_counts():
    x = Waveform(np.random.default_rng(0).standard_normal(16000))
    assert mfcc(x).values.shape == (101, 13)
    assert mfcc(x, MfccConfig(center_pad=False)).values.shape == (97, 13)


def test_constant_log_mel_gives_only_c0():
    basis = dct_matrix(40, 13)
    coeffs = basis @ np.full(40, -3.7)
    assert coeffs[0] != 0
    np.testing.assert_allclose(coeffs[1:], 0.0, atol=1e-12)


def test_dct_matrix_is_orthonormal_dct_ii():
    np.testing.assert_allclose(dct_matrix(40, 40) @ dct_matrix(40, 40).T, np.eye(40), atol=1e-12)
    v = np.random.default_rng(1).standard_normal(40)
    np.testing.assert_allclose(dct_matrix(40, 13) @ v, scipy.fft.dct(v, type=2, norm="ortho")[:13], atol=1e-12)


def test_filterbank_triangles_peak_at_one():
    fbank = mel_filterbank(MfccConfig())
    assert fbank.shape == (40, 513)
    assert np.all(fbank >= 0)
    assert np.all(fbank.max(axis=1) <= 1.0 + 1e-12)


def test_matches_step_by_step_oracle():
    cfg = MfccConfig()
    x = np.random.default_rng(2).standard_normal(4000)
    out = mfcc(Waveform(x), cfg).values

    win, hop = cfg.win_length, cfg.hop_length
    padded = np.pad(x, win // 2, mode="reflect")
    window = 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(win) / win)
    fbank = mel_filterbank(cfg)
    for t in (0, 7, out.shape[0] - 1):
        frame = padded[t * hop:t * hop + win] * window
        power = np.abs(np.fft.rfft(frame, n=cfg.fft_size)) ** 2
        log_mel = np.log(np.maximum(fbank @ power, cfg.log_floor))
        expected = scipy.fft.dct(log_mel, type=2, norm="ortho")[:cfg.n_coeffs]
        np.testing.assert_allclose(out[t], expected, rtol=1e-8, atol=1e-8)


def test_silence_hits_log_floor():
    cfg = MfccConfig()
    log_mel = log_mel_tensor(torch.zeros(1600, dtype=torch.float64), cfg)
    torch.testing.assert_close(log_mel, torch.full_like(log_mel, np.log(cfg.log_floor)))


def test_feature_statistics():
    a = np.array([[1.0, 2.0], [3.0, 2.0]])
    mean, std = feature_statistics((a, np.array([[5.0, 2.0]])))
    np.testing.assert_allclose(mean, [3.0, 2.0])
    assert std[0] == pytest.approx(np.std([1.0, 3.0, 5.0]))
    assert std[1] == 1e-5


def test_errors():
    with pytest.raises(InvalidInputError):
        mfcc(Waveform(np.zeros(100)))
    with pytest.raises(ConfigError):
        MfccConfig(n_coeffs=41)
    with pytest.raises(InvalidInputError):
        mfcc(Waveform(np.zeros(16000), 8000))
