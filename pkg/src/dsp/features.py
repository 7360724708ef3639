"""
Feature Extraction Module

This module computes MFCC features for the phoneme classifier:
frame -> Hamming window -> power spectrum -> mel filterbank -> floored log -> DCT-II.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import librosa
import numpy as np
import scipy.fft
import torch
from pydantic import model_validator

from dsp.audio import Waveform
from dsp.stft import analysis_window, frame_signal, num_frames
from utils.config import ConfigModel
from utils.errors import InvalidInputError
from utils.utils import SAMPLE_RATE, ms_to_samples


class MfccConfig(ConfigModel):
    """MFCC analysis parameters."""

    window_ms: float = 40.0
    hop_ms: float = 10.0
    fft_size: int = 1024
    n_mels: int = 40
    n_coeffs: int = 13
    mel_fmin: float = 0.0
    mel_fmax: float = 8000.0
    log_floor: float = 1e-10
    center_pad: bool = True
    sample_rate: int = SAMPLE_RATE

    @model_validator(mode="after")
    def _check(self) -> "MfccConfig":
        if self.n_coeffs < 1 or self.n_mels < 1:
            raise ValueError("n_coeffs and n_mels must be positive")
        if self.n_coeffs > self.n_mels:
            raise ValueError(f"n_coeffs ({self.n_coeffs}) must not exceed n_mels ({self.n_mels})")
        if self.hop_ms > self.window_ms or self.hop_length < 1:
            raise ValueError("hop must be positive and no longer than the window")
        if self.fft_size < self.win_length:
            raise ValueError(f"fft_size ({self.fft_size}) must be >= window length ({self.win_length} samples)")
        if not 0.0 <= self.mel_fmin < self.mel_fmax <= self.sample_rate / 2:
            raise ValueError("mel range must satisfy 0 <= fmin < fmax <= sample_rate / 2")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")
        return self

    @property
    def win_length(self) -> int:
        return ms_to_samples(self.window_ms, self.sample_rate)

    @property
    def hop_length(self) -> int:
        return ms_to_samples(self.hop_ms, self.sample_rate)

    def num_frames(self, num_samples: int) -> int:
        return num_frames(num_samples, self.win_length, self.hop_length, self.center_pad)


@dataclass(frozen=True)
class MfccFrames:
    """T x n_coeffs MFCC matrix."""

    values: np.ndarray
    frame_hop: int

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]


@lru_cache(maxsize=16)
def mel_filterbank(cfg: MfccConfig) -> np.ndarray:
    """
    Triangular mel filterbank (HTK mel scale, peak height 1).

    Args:
        cfg: MFCC configuration

    Returns:
        Array of shape (n_mels, fft_size // 2 + 1)
    """
    return librosa.filters.mel(
        sr=cfg.sample_rate,
        n_fft=cfg.fft_size,
        n_mels=cfg.n_mels,
        fmin=cfg.mel_fmin,
        fmax=cfg.mel_fmax,
        htk=True,
        norm=None,
        dtype=np.float64,
    )


@lru_cache(maxsize=16)
def dct_matrix(n_mels: int, n_coeffs: int) -> np.ndarray:
    """
    Orthonormal DCT-II basis restricted to the first coefficients.

    Args:
        n_mels: Input length
        n_coeffs: Number of coefficients kept

    Returns:
        Array of shape (n_coeffs, n_mels)
    """
    return scipy.fft.dct(np.eye(n_mels), type=2, norm="ortho", axis=0)[:n_coeffs]


def log_mel_tensor(x: torch.Tensor, cfg: MfccConfig) -> torch.Tensor:
    """
    Floored log mel energies.

    Args:
        x: Real signals of shape (..., N)
        cfg: MFCC configuration

    Returns:
        Tensor of shape (..., T, n_mels)
    """
    lead = x.shape[:-1]
    frames = frame_signal(x.reshape(-1, x.shape[-1]), cfg.win_length, cfg.hop_length, cfg.center_pad)
    frames = frames * analysis_window(cfg.win_length, x.dtype)
    spec = torch.fft.rfft(frames, n=cfg.fft_size, dim=-1)
    power = spec.real ** 2 + spec.imag ** 2
    fbank = torch.as_tensor(mel_filterbank(cfg), dtype=x.dtype)
    mel = power @ fbank.T
    log_mel = torch.log(mel.clamp_min(cfg.log_floor))
    return log_mel.reshape(*lead, log_mel.shape[-2], log_mel.shape[-1])


def mfcc_tensor(x: torch.Tensor, cfg: MfccConfig) -> torch.Tensor:
    """
    Differentiable MFCC extraction.

    Args:
        x: Real signals of shape (..., N)
        cfg: MFCC configuration

    Returns:
        Tensor of shape (..., T, n_coeffs)
    """
    basis = torch.as_tensor(dct_matrix(cfg.n_mels, cfg.n_coeffs), dtype=x.dtype)
    return log_mel_tensor(x, cfg) @ basis.T


def mfcc(w: Waveform, cfg: MfccConfig = MfccConfig()) -> MfccFrames:
    """
    MFCC features of a waveform.

    Args:
        w: Input waveform (at least one window long)
        cfg: MFCC configuration

    Returns:
        T x n_coeffs MFCC frames
    """
    if w.sample_rate != cfg.sample_rate:
        raise InvalidInputError(f"Waveform rate {w.sample_rate} Hz differs from config {cfg.sample_rate} Hz")
    minimum = cfg.win_length // 2 + 1 if cfg.center_pad else cfg.win_length
    if len(w) < minimum:
        raise InvalidInputError(f"Waveform of {len(w)} samples is shorter than the MFCC window ({minimum} samples)")

    values = mfcc_tensor(torch.from_numpy(w.samples), cfg).numpy()
    return MfccFrames(values, cfg.hop_length)


def feature_statistics(frames: Tuple[np.ndarray, ...]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-coefficient mean and standard deviation over a set of MFCC matrices.

    Args:
        frames: MFCC matrices of shape (T_k, n_coeffs)

    Returns:
        Tuple of (mean, std); std is floored at 1e-5
    """
    stacked = np.concatenate([np.asarray(f, dtype=np.float64) for f in frames], axis=0)
    if stacked.shape[0] == 0:
        raise InvalidInputError("Cannot compute feature statistics from zero frames")
    return stacked.mean(axis=0), np.maximum(stacked.std(axis=0), 1e-5)
