import numpy as np
import pytest
import torch

from dsp.audio import Waveform
from dsp.stft import ComplexSpectrogram, StftConfig, stft
from enhancer.network import Enhancer, EnhancerConfig
from enhancer.spectrum import GainPhase, reconstruct_spectrum, reconstruct_tensor, to_gain_phase
from utils.errors import AlignmentError, ConfigError, InvalidInputError


def _spec(frames=4, bins=257, seed=0):
    rng = np.random.default_rng(seed)
    return torch.from_numpy(rng.standard_normal((1, frames, bins)) + 1j * rng.standard_normal((1, frames, bins)))


def test_default_shape_trace():
    net = Enhancer(EnhancerConfig(), 257).double()
    p3, skips = net.encode(_spec())
    assert skips["e1"].shape == (1, 16, 4, 257)
    assert skips["e2"].shape == (1, 32, 4, 129)
    assert skips["e3"].shape == (1, 64, 4, 65)
    assert p3.shape == (1, 64, 4, 33)
    raw = net.decode(net.residual(p3), p3, skips)
    assert raw.shape == (1, 3, 4, 257)
    gain, phase = net(_spec())
    assert gain.shape == phase.shape == (1, 4, 257)
    assert torch.all((gain >= 0) & (gain <= 2))
    torch.testing.assert_close(phase.abs(), torch.ones_like(gain))


def test_zero_spectrum_gives_zero_features():
    net = Enhancer(EnhancerConfig(), 257, "pbdr", 2, 8).double()
    probs = torch.full((1, 3, 8), 1 / 8, dtype=torch.float64)
    p3, skips = net.encode(torch.zeros(1, 3, 257, dtype=torch.complex128), probs)
    assert torch.all(p3 == 0)
    assert all(torch.all(v == 0) for v in skips.values())


@pytest.mark.parametrize("placement", [1, 2])
def test_identity_pbdr_matches_unconditioned_network(placement):
    torch.manual_seed(0)
    baseline = Enhancer(EnhancerConfig(channels=(4, 4, 4), residual_blocks=1), 257).double()
    conditioned = Enhancer(EnhancerConfig(channels=(4, 4, 4), residual_blocks=1), 257, "pbdr", placement, 5).double()
    conditioned.load_state_dict(baseline.state_dict(), strict=False)
    probs = torch.from_numpy(np.random.default_rng(1).dirichlet(np.ones(5), size=(1, 4)))
    spec = _spec()
    p_base, skips_base = baseline.encode(spec)
    p_cond, skips_cond = conditioned.encode(spec, probs)
    torch.testing.assert_close(p_cond, p_base, atol=1e-6, rtol=0)
    gain_b, phase_b = baseline(spec)
    gain_c, phase_c = conditioned(spec, probs)
    torch.testing.assert_close(gain_c, gain_b, atol=1e-6, rtol=0)
    torch.testing.assert_close(phase_c, phase_b, atol=1e-6, rtol=0)


def test_pbdr_mapper_width_follows_placement():
    assert Enhancer(EnhancerConfig(), 257, "pbdr", 2, 72).conditioner.mapper.n_bins == 129
    assert Enhancer(EnhancerConfig(), 257, "pbdr", 1, 72).conditioner.mapper.n_bins == 257


@pytest.mark.parametrize("placement", [1, 2])
def test_concat_conditioning_shapes(placement):
    net = Enhancer(EnhancerConfig(channels=(4, 4, 4), residual_blocks=1, concat_channels=2), 257, "concat",
                   placement, 6)
    probs = torch.full((1, 4, 6), 1 / 6)
    _, skips = net.encode(_spec().to(torch.complex64), probs)
    key = f"e{placement}"
    assert skips[key].shape[1] == 4 + 2
    gain, _ = net(_spec().to(torch.complex64), probs)
    assert gain.shape == (1, 4, 257)


def test_micro_frequency_trace():
    net = Enhancer(EnhancerConfig(channels=(2, 2, 2), residual_blocks=1, kernel_size=(3, 3), activation="tanh"), 9)
    assert net.freq_sizes == (9, 5, 3, 2)
    gain, _ = net(_spec(frames=6, bins=9).to(torch.complex64))
    assert gain.shape == (1, 6, 9)


def test_errors():
    net = Enhancer(EnhancerConfig(channels=(4, 4, 4), residual_blocks=1), 257, "pbdr", 2, 5)
    with pytest.raises(InvalidInputError):
        net(_spec(bins=129).to(torch.complex64))
    with pytest.raises(InvalidInputError):
        net(_spec().to(torch.complex64))
    with pytest.raises(AlignmentError):
        net(_spec().to(torch.complex64), torch.full((1, 3, 5), 0.2))
    with pytest.raises(InvalidInputError):
        Enhancer(EnhancerConfig(), 257, "pbdr", None, 5)
    with pytest.raises(ConfigError):
        EnhancerConfig(kernel_size=(3, 4))


def test_gain_phase_examples():
    raw = np.zeros((3, 2, 2))
    raw[1] = 3.0
    raw[2] = 4.0
    gp = to_gain_phase(raw)
    np.testing.assert_allclose(gp.gain, 1.0)
    np.testing.assert_allclose(gp.phase, 0.6 + 0.8j, atol=1e-12)

    raw[1], raw[2] = 1.0, 0.0
    np.testing.assert_allclose(to_gain_phase(raw).phase, 1.0 + 0.0j)

    raw[1], raw[2] = 0.0, 0.0
    np.testing.assert_allclose(to_gain_phase(raw).phase, 1.0 + 0.0j)


def test_gain_phase_validation():
    with pytest.raises(InvalidInputError):
        GainPhase(np.full((2, 2), 2.5), np.ones((2, 2)))
    with pytest.raises(InvalidInputError):
        GainPhase(np.ones((2, 2)), np.full((2, 2), 0.5 + 0j))
    with pytest.raises(InvalidInputError):
        to_gain_phase(np.zeros((2, 2, 2)))


def test_identity_mask_and_zero_gain():
    C = stft(Waveform(np.random.default_rng(2).standard_normal(800)))
    phase = np.exp(1j * np.angle(C.values))
    same = reconstruct_spectrum(GainPhase(np.ones(C.values.shape), phase), C)
    np.testing.assert_allclose(same.values, C.values, atol=1e-6)
    zero = reconstruct_spectrum(GainPhase(np.zeros(C.values.shape), phase), C)
    assert np.all(zero.values == 0)


def test_reconstruct_matches_elementwise_oracle():
    rng = np.random.default_rng(3)
    cfg = StftConfig(fft_size=8, window_ms=0.5, hop_ms=0.25)
    gain = rng.uniform(0, 2, size=(3, 5))
    phase = np.exp(1j * rng.uniform(-np.pi, np.pi, size=(3, 5)))
    C = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    out = reconstruct_spectrum(GainPhase(gain, phase), ComplexSpectrogram(C, cfg.hop_length, cfg)).values
    for t in range(3):
        for f in range(5):
            assert abs(out[t, f] - gain[t, f] * abs(C[t, f]) * phase[t, f]) < 1e-12
    with pytest.raises(InvalidInputError):
        reconstruct_tensor(torch.ones(3, 4), torch.ones(3, 5, dtype=torch.complex128), torch.from_numpy(C))
