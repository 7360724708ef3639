"""
STFT Module

This module implements the short-time Fourier transform, its least-squares
overlap-add inverse and the STFT consistency projection.

The transforms are written on torch tensors so they can sit inside a training
graph (the consistency projection is part of the spectral loss). The public
functions stft, istft and consistency_project wrap them for Waveform and
ComplexSpectrogram values.
"""

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import model_validator

from dsp.audio import Waveform
from utils.config import ConfigModel
from utils.errors import InvalidInputError
from utils.utils import SAMPLE_RATE, ms_to_samples

# Floor of the summed squared window in the overlap-add normalization
ENVELOPE_FLOOR = 1e-10


class StftConfig(ConfigModel):
    """STFT analysis parameters."""

    window_ms: float = 20.0
    hop_ms: float = 10.0
    fft_size: int = 512
    window_type: Literal["hamming"] = "hamming"
    center_pad: bool = True
    sample_rate: int = SAMPLE_RATE

    @model_validator(mode="after")
    def _check(self) -> "StftConfig":
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.win_length < 1 or self.hop_length < 1:
            raise ValueError("window and hop must be at least one sample")
        if self.hop_ms > self.window_ms:
            raise ValueError(f"hop_ms ({self.hop_ms}) must not exceed window_ms ({self.window_ms})")
        if self.hop_length > (self.win_length + 1) // 2:
            # overlap-add leaves the signal tail uncovered beyond half a window
            raise ValueError(f"hop ({self.hop_length} samples) must not exceed half the window "
                             f"({self.win_length} samples)")
        if self.fft_size < self.win_length:
            raise ValueError(f"fft_size ({self.fft_size}) must be >= window length ({self.win_length} samples)")
        return self

    @property
    def win_length(self) -> int:
        return ms_to_samples(self.window_ms, self.sample_rate)

    @property
    def hop_length(self) -> int:
        return ms_to_samples(self.hop_ms, self.sample_rate)

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def num_frames(self, num_samples: int) -> int:
        """Number of frames the STFT produces for a signal of the given length."""
        return num_frames(num_samples, self.win_length, self.hop_length, self.center_pad)


@dataclass(frozen=True)
class ComplexSpectrogram:
    """T x F complex STFT matrix with the config that produced it."""

    values: np.ndarray
    frame_hop: int
    config: StftConfig
    length: Optional[int] = None

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.complex128)
        if values.ndim != 2:
            raise InvalidInputError(f"Spectrogram must be T x F, got shape {values.shape}")
        if values.shape[1] != self.config.n_bins:
            raise InvalidInputError(
                f"Spectrogram has {values.shape[1]} bins, config expects {self.config.n_bins}"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("Spectrogram contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]


def num_frames(num_samples: int, win_length: int, hop_length: int, center: bool) -> int:
    """
    Frame count of the framing scheme shared by STFT and MFCC.

    Args:
        num_samples: Signal length
        win_length: Frame length in samples
        hop_length: Hop in samples
        center: Whether the signal is reflect-padded by win_length // 2 on both sides

    Returns:
        Number of frames (0 if the signal is too short)
    """
    padded = num_samples + (2 * (win_length // 2) if center else 0)
    if padded < win_length:
        return 0
    return 1 + (padded - win_length) // hop_length


def analysis_window(win_length: int, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """Periodic Hamming window."""
    return torch.hamming_window(win_length, periodic=True, dtype=dtype)


def frame_signal(x: torch.Tensor, win_length: int, hop_length: int, center: bool) -> torch.Tensor:
    """
    Cut a batch of signals into overlapping frames.

    Args:
        x: Signals of shape (B, N)
        win_length: Frame length
        hop_length: Hop between frame starts
        center: Reflect-pad by win_length // 2 so frame t is centred on sample t * hop

    Returns:
        Frames of shape (B, T, win_length)
    """
    if x.shape[-1] == 0:
        raise InvalidInputError("Cannot frame an empty signal")
    if center:
        pad = win_length // 2
        if x.shape[-1] <= pad:
            raise InvalidInputError(
                f"Signal of {x.shape[-1]} samples is too short for reflect padding of {pad} samples"
            )
        x = F.pad(x.unsqueeze(1), (pad, pad), mode="reflect").squeeze(1)
    if x.shape[-1] < win_length:
        raise InvalidInputError(
            f"Window of {win_length} samples is longer than the signal ({x.shape[-1]} samples)"
        )
    return x.unfold(-1, win_length, hop_length)


def stft_tensor(x: torch.Tensor, cfg: StftConfig) -> torch.Tensor:
    """
    Differentiable STFT.

    Args:
        x: Real signals of shape (..., N)
        cfg: STFT configuration

    Returns:
        Complex tensor of shape (..., T, fft_size // 2 + 1)
    """
    lead = x.shape[:-1]
    frames = frame_signal(x.reshape(-1, x.shape[-1]), cfg.win_length, cfg.hop_length, cfg.center_pad)
    frames = frames * analysis_window(cfg.win_length, x.dtype)
    spec = torch.fft.rfft(frames, n=cfg.fft_size, dim=-1)
    return spec.reshape(*lead, spec.shape[-2], spec.shape[-1])


def istft_tensor(spec: torch.Tensor, cfg: StftConfig, length: Optional[int] = None) -> torch.Tensor:
    """
    Differentiable inverse STFT by least-squares overlap-add.

    Each frame is windowed again, overlap-added, and divided by the summed squared
    window, so istft_tensor(stft_tensor(x)) == x for any window.

    Args:
        spec: Complex tensor of shape (..., T, F)
        cfg: STFT configuration
        length: Output length; defaults to (T - 1) * hop with centre padding

    Returns:
        Real signals of shape (..., length)
    """
    if spec.dim() < 2 or spec.shape[-1] != cfg.n_bins:
        raise InvalidInputError(
            f"Spectrogram shape {tuple(spec.shape)} does not match config ({cfg.n_bins} bins)"
        )
    n_frames = spec.shape[-2]
    if n_frames < 1:
        raise InvalidInputError("Spectrogram has no frames")

    win, hop = cfg.win_length, cfg.hop_length
    lead = spec.shape[:-2]
    spec = spec.reshape(-1, n_frames, spec.shape[-1])
    window = analysis_window(win, spec.real.dtype)

    frames = torch.fft.irfft(spec, n=cfg.fft_size, dim=-1)[..., :win] * window
    total = (n_frames - 1) * hop + win
    fold_args = dict(output_size=(1, total), kernel_size=(1, win), stride=(1, hop))
    signal = F.fold(frames.transpose(1, 2), **fold_args).reshape(spec.shape[0], total)
    envelope = F.fold((window ** 2).expand(1, n_frames, win).transpose(1, 2), **fold_args).reshape(total)
    signal = signal / envelope.clamp_min(ENVELOPE_FLOOR)

    if cfg.center_pad:
        signal = signal[:, win // 2:]
        default_length = (n_frames - 1) * hop
    else:
        default_length = total
    out_length = default_length if length is None else int(length)

    if signal.shape[-1] >= out_length:
        signal = signal[:, :out_length]
    else:
        signal = F.pad(signal, (0, out_length - signal.shape[-1]))
    return signal.reshape(*lead, out_length)


def consistency_project_tensor(spec: torch.Tensor, cfg: StftConfig, length: Optional[int] = None) -> torch.Tensor:
    """
    Map a complex matrix to the spectrogram of its least-squares time signal.

    Args:
        spec: Complex tensor of shape (..., T, F)
        cfg: STFT configuration
        length: Time-domain length used between the two transforms

    Returns:
        stft(istft(spec)), same shape as spec
    """
    projected = stft_tensor(istft_tensor(spec, cfg, length), cfg)
    if projected.shape != spec.shape:
        raise InvalidInputError(
            f"Projection changed the shape from {tuple(spec.shape)} to {tuple(projected.shape)}; "
            f"length {length} is inconsistent with {spec.shape[-2]} frames"
        )
    return projected


def stft(w: Waveform, cfg: StftConfig = StftConfig()) -> ComplexSpectrogram:
    """
    Short-time Fourier transform of a waveform.

    Args:
        w: Input waveform
        cfg: STFT configuration

    Returns:
        Complex spectrogram of shape T x (fft_size / 2 + 1)
    """
    if len(w) == 0:
        raise InvalidInputError("Cannot compute the STFT of an empty waveform")
    if w.sample_rate != cfg.sample_rate:
        raise InvalidInputError(f"Waveform rate {w.sample_rate} Hz differs from config {cfg.sample_rate} Hz")

    values = stft_tensor(torch.from_numpy(w.samples), cfg).numpy()
    return ComplexSpectrogram(values, cfg.hop_length, cfg, len(w))


def istft(X: ComplexSpectrogram, cfg: Optional[StftConfig] = None) -> Waveform:
    """
    Inverse STFT by least-squares overlap-add.

    Args:
        X: Complex spectrogram
        cfg: STFT configuration; defaults to the spectrogram's own

    Returns:
        Reconstructed waveform (the original length when X records it)
    """
    cfg = cfg or X.config
    if X.values.shape[1] != cfg.n_bins or X.frame_hop != cfg.hop_length:
        raise InvalidInputError(
            f"Spectrogram (bins={X.values.shape[1]}, hop={X.frame_hop}) does not match config "
            f"(bins={cfg.n_bins}, hop={cfg.hop_length})"
        )
    samples = istft_tensor(torch.from_numpy(X.values), cfg, X.length).numpy()
    return Waveform(samples, cfg.sample_rate)


def consistency_project(X: ComplexSpectrogram) -> ComplexSpectrogram:
    """
    STFT consistency projection, stft(istft(X)).

    Args:
        X: Complex spectrogram

    Returns:
        The consistent spectrogram closest to X in the least-squares sense
    """
    values = consistency_project_tensor(torch.from_numpy(X.values), X.config, X.length).numpy()
    return ComplexSpectrogram(values, X.frame_hop, X.config, X.length)
