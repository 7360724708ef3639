"""
Audio Module

This module defines the Waveform container used by every signal-processing
operation and reads/writes mono 16-bit PCM WAV files.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import soundfile as sf

from utils.errors import InvalidInputError
from utils.utils import SAMPLE_RATE, ensure_directory_exists

PCM_SCALE = 32768.0


@dataclass(frozen=True)
class Waveform:
    """Time-domain signal with its sample rate."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidInputError(f"Waveform must be one-dimensional, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError("Waveform contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise InvalidInputError(f"Sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        """Duration in seconds."""
        return len(self.samples) / self.sample_rate

    def power(self) -> float:
        """Mean squared amplitude."""
        if len(self.samples) == 0:
            return 0.0
        return float(np.mean(self.samples ** 2))


def read_wav(file_path: Union[str, Path], expected_rate: int = SAMPLE_RATE) -> Waveform:
    """
    Read a mono 16-bit PCM WAV file, scaling samples into [-1, 1).

    Args:
        file_path: Path to the WAV file
        expected_rate: Required sample rate in Hz

    Returns:
        The decoded waveform
    """
    if not Path(file_path).exists():
        raise FileNotFoundError(f"Audio file not found: {file_path}")

    data, rate = sf.read(str(file_path), dtype="int16", always_2d=True)
    if data.shape[1] != 1:
        raise InvalidInputError(f"{file_path}: expected mono audio, got {data.shape[1]} channels")
    if rate != expected_rate:
        raise InvalidInputError(f"{file_path}: expected {expected_rate} Hz, got {rate} Hz (no resampling)")

    return Waveform(data[:, 0].astype(np.float64) / PCM_SCALE, rate)


def quantize_pcm16(samples: np.ndarray) -> np.ndarray:
    """
    Quantize [-1, 1] samples to signed 16-bit integers, clipping out-of-range values.

    Args:
        samples: Real-valued samples

    Returns:
        int16 array
    """
    scaled = np.round(np.asarray(samples, dtype=np.float64) * PCM_SCALE)
    return np.clip(scaled, -PCM_SCALE, PCM_SCALE - 1).astype(np.int16)


def write_wav(file_path: Union[str, Path], waveform: Waveform) -> None:
    """
    Write a waveform as mono 16-bit PCM WAV.

    Args:
        file_path: Path to the output file
        waveform: Waveform to write
    """
    ensure_directory_exists(Path(file_path).parent)
    sf.write(str(file_path), quantize_pcm16(waveform.samples), waveform.sample_rate, subtype="PCM_16")
