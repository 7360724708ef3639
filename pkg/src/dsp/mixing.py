"""
Noise Mixing Module

This module adds noise to clean speech at a requested signal-to-noise ratio.
"""

from typing import Optional, Tuple

import numpy as np

from dsp.audio import Waveform
from utils.errors import InvalidInputError


def fit_noise_length(noise: np.ndarray, length: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Tile a short noise or crop a long one at a random offset.

    Args:
        noise: Noise samples
        length: Target length
        rng: Generator for the crop offset (seed 0 if omitted)

    Returns:
        Noise samples of exactly the target length
    """
    if len(noise) == 0:
        raise InvalidInputError("Noise is empty")
    if len(noise) < length:
        reps = int(np.ceil(length / len(noise)))
        return np.tile(noise, reps)[:length]
    rng = rng if rng is not None else np.random.default_rng(0)
    offset = int(rng.integers(0, len(noise) - length + 1))
    return noise[offset:offset + length]


def noise_scale(clean_power: float, noise_power: float, snr_db: float) -> float:
    """
    Gain that brings noise to the requested SNR against the clean power.

    Args:
        clean_power: Mean squared clean amplitude
        noise_power: Mean squared noise amplitude
        snr_db: Target SNR in dB

    Returns:
        Amplitude factor alpha with 10*log10(P_clean / (alpha^2 * P_noise)) == snr_db
    """
    if clean_power <= 0:
        raise InvalidInputError("Clean signal is silent; SNR is undefined")
    if noise_power <= 0:
        raise InvalidInputError("Noise signal is silent; it cannot be scaled to an SNR")
    return float(np.sqrt(clean_power / (noise_power * 10.0 ** (snr_db / 10.0))))


def scaled_noise_at_snr(clean: Waveform, noise: Waveform, snr_db: float,
                        rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, float]:
    """
    Fit the noise to the clean length and scale it to the requested SNR.

    Args:
        clean: Clean waveform
        noise: Noise waveform (tiled or cropped to the clean length)
        snr_db: Target SNR in dB
        rng: Generator for the crop offset

    Returns:
        Tuple of (scaled noise samples, alpha)
    """
    if clean.sample_rate != noise.sample_rate:
        raise InvalidInputError(f"Sample rates differ: {clean.sample_rate} vs {noise.sample_rate}")
    if len(clean) == 0:
        raise InvalidInputError("Clean signal is empty")

    fitted = fit_noise_length(noise.samples, len(clean), rng)
    alpha = noise_scale(clean.power(), float(np.mean(fitted ** 2)), snr_db)
    return alpha * fitted, alpha


def mix_at_snr(clean: Waveform, noise: Waveform, snr_db: float,
               rng: Optional[np.random.Generator] = None) -> Waveform:
    """
    Mix clean speech and noise at a given SNR.

    Args:
        clean: Clean waveform
        noise: Noise waveform
        snr_db: Target SNR in dB
        rng: Generator for the noise crop offset

    Returns:
        clean + alpha * noise
    """
    scaled, _ = scaled_noise_at_snr(clean, noise, snr_db, rng)
    return Waveform(clean.samples + scaled, clean.sample_rate)
