import numpy as np
import pytest
import soundfile as sf
from hypothesis import given, strategies as st

from dsp.audio import Waveform, quantize_pcm16, read_wav, write_wav
from dsp.mixing import fit_noise_length, mix_at_snr, noise_scale, scaled_noise_at_snr
from evaluation.metrics import snr_db
from utils.errors import InvalidInputError


def _power_ratio_db(clean, noise):
    return 10 * np.log10(np.sum(clean ** 2) / np.sum(noise ** 2))


def test_waveform_validation():
    with pytest.raises(InvalidInputError):
        Waveform(np.zeros((2, 10)))
    with pytest.raises(InvalidInputError):
        Waveform(np.array([0.0, np.nan]))
    w = Waveform(np.ones(8000))
    assert w.duration == 0.5
    assert w.power() == 1.0


def test_wav_round_trip_is_pcm16_exact(tmp_path):
    x = quantize_pcm16(np.random.default_rng(0).uniform(-0.9, 0.9, 1600)) / 32768.0
    write_wav(tmp_path / "a.wav", Waveform(x))
    y = read_wav(tmp_path / "a.wav")
    assert y.sample_rate == 16000
    np.testing.assert_array_equal(y.samples, x)


def test_read_wav_rejects_other_rates_and_stereo(tmp_path):
    sf.write(str(tmp_path / "r.wav"), np.zeros(800, dtype=np.int16), 8000, subtype="PCM_16")
    sf.write(str(tmp_path / "s.wav"), np.zeros((800, 2), dtype=np.int16), 16000, subtype="PCM_16")
    with pytest.raises(InvalidInputError):
        read_wav(tmp_path / "r.wav")
    with pytest.raises(InvalidInputError):
        read_wav(tmp_path / "s.wav")
    with pytest.raises(FileNotFoundError):
        read_wav(tmp_path / "missing.wav")


def test_zero_db_gives_equal_power():
    rng = np.random.default_rng(1)
    clean = Waveform(rng.standard_normal(16000))
    scaled, _ = scaled_noise_at_snr(clean, Waveform(rng.standard_normal(20000)), 0.0, rng)
    assert abs(_power_ratio_db(clean.samples, scaled)) < 0.01


def test_alpha_for_twenty_db():
    assert noise_scale(1.0, 1.0, 20.0) == pytest.approx(0.1)


@given(st.floats(min_value=-10.0, max_value=30.0))
def test_achieved_snr(snr):
    rng = np.random.default_rng(2)
    clean = Waveform(rng.standard_normal(4000))
    noise = Waveform(rng.standard_normal(3000))
    noisy = mix_at_snr(clean, noise, snr, rng)
    assert _power_ratio_db(clean.samples, noisy.samples - clean.samples) == pytest.approx(snr, abs=1e-6)
    assert snr_db(clean, noisy) == pytest.approx(snr, abs=1e-6)


def test_fit_noise_length():
    noise = np.arange(5.0)
    np.testing.assert_array_equal(fit_noise_length(noise, 12), np.tile(noise, 3)[:12])
    cropped = fit_noise_length(np.arange(100.0), 10, np.random.default_rng(0))
    assert len(cropped) == 10
    np.testing.assert_array_equal(np.diff(cropped), 1.0)


def test_silent_inputs_are_rejected():
    with pytest.raises(InvalidInputError):
        mix_at_snr(Waveform(np.zeros(100)), Waveform(np.ones(100)), 0.0)
    with pytest.raises(InvalidInputError):
        mix_at_snr(Waveform(np.ones(100)), Waveform(np.zeros(100)), 0.0)
