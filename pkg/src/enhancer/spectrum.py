"""
Gain and Phase Module

The decoder's last layer emits three channels per T-F bin: a gain logit g and
an unnormalized phase (a, b). This module turns them into a bounded amplitude
gain 2 * sigmoid(g) and a unit complex phase, and recovers the estimated
spectrum S_hat = gain * |C| * phase.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import torch

from dsp.stft import ComplexSpectrogram
from utils.errors import InvalidInputError

# Phase vectors shorter than this map to the phase (1, 0)
PHASE_FLOOR = 1e-8
UNIT_TOLERANCE = 1e-6
MAX_GAIN = 2.0


@dataclass(frozen=True)
class GainPhase:
    """T x F amplitude gain in [0, 2] and T x F unit-modulus complex phase."""

    gain: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        gain = np.asarray(self.gain, dtype=np.float64)
        phase = np.asarray(self.phase, dtype=np.complex128)
        if gain.shape != phase.shape or gain.ndim != 2:
            raise InvalidInputError(f"Gain {gain.shape} and phase {phase.shape} must be equal-shape T x F matrices")
        if not np.all(np.isfinite(gain)) or np.any(gain < 0) or np.any(gain > MAX_GAIN):
            raise InvalidInputError(f"Gain must lie in [0, {MAX_GAIN}]")
        if phase.size and np.max(np.abs(np.abs(phase) - 1.0)) > UNIT_TOLERANCE:
            raise InvalidInputError("Phase must be unit-modulus")
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "phase", phase)


def gain_phase_tensor(raw: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Map the decoder output to gain and phase.

    Args:
        raw: Tensor of shape (..., 3, T, F) holding (g, a, b)

    Returns:
        Tuple of (gain of shape (..., T, F), complex unit phase of shape (..., T, F))
    """
    if raw.shape[-3] != 3:
        raise InvalidInputError(f"Decoder output must have 3 channels, got {raw.shape[-3]}")
    g, a, b = raw.unbind(dim=-3)
    gain = MAX_GAIN * torch.sigmoid(g)

    sq = a * a + b * b
    small = sq < PHASE_FLOOR ** 2
    norm = torch.sqrt(torch.where(small, torch.ones_like(sq), sq))
    cos = torch.where(small, torch.ones_like(a), a / norm)
    sin = torch.where(small, torch.zeros_like(b), b / norm)
    return gain, torch.complex(cos, sin)


def to_gain_phase(raw: np.ndarray) -> GainPhase:
    """
    Gain and phase from a 3 x T x F decoder output.

    Args:
        raw: Decoder output channels (g, a, b)

    Returns:
        The GainPhase pair
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 3:
        raise InvalidInputError(f"Decoder output must be 3 x T x F, got shape {raw.shape}")
    gain, phase = gain_phase_tensor(torch.from_numpy(raw))
    return GainPhase(gain.numpy(), phase.numpy())


def reconstruct_tensor(gain: torch.Tensor, phase: torch.Tensor, spec: torch.Tensor) -> torch.Tensor:
    """
    S_hat = gain * |C| * phase.

    Args:
        gain: Real tensor of shape (..., T, F)
        phase: Unit complex tensor of shape (..., T, F)
        spec: Noisy complex spectrogram C of shape (..., T, F)

    Returns:
        Complex estimate of shape (..., T, F)
    """
    if gain.shape != spec.shape or phase.shape != spec.shape:
        raise InvalidInputError(
            f"Gain {tuple(gain.shape)}, phase {tuple(phase.shape)} and spectrum {tuple(spec.shape)} must agree"
        )
    return (gain * spec.abs()) * phase


def reconstruct_spectrum(gp: GainPhase, C: ComplexSpectrogram) -> ComplexSpectrogram:
    """
    Recover the estimated spectrum from a gain/phase pair and the noisy spectrum.

    Args:
        gp: Gain and phase
        C: Noisy spectrogram

    Returns:
        S_hat with the same framing as C
    """
    values = reconstruct_tensor(torch.from_numpy(gp.gain), torch.from_numpy(gp.phase),
                                torch.from_numpy(C.values)).numpy()
    return ComplexSpectrogram(values, C.frame_hop, C.config, C.length)
