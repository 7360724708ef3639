"""
Quality Metrics Module

Segmental SNR and plain SNR between a reference and an estimate.
"""

import math

import numpy as np
from pydantic import PositiveFloat, model_validator

from dsp.audio import Waveform
from utils.config import ConfigModel
from utils.errors import InvalidInputError, UndefinedMetricError
from utils.utils import SAMPLE_RATE, ms_to_samples


class SsnrConfig(ConfigModel):
    """Segmental SNR parameters."""

    segment_ms: PositiveFloat = 20.0
    clamp_min_db: float = -10.0
    clamp_max_db: float = 35.0
    silence_threshold: float = 1e-8
    sample_rate: int = SAMPLE_RATE

    @model_validator(mode="after")
    def _check(self) -> "SsnrConfig":
        if self.clamp_min_db >= self.clamp_max_db:
            raise ValueError("clamp_min_db must be below clamp_max_db")
        if self.segment_length < 1:
            raise ValueError("segment must be at least one sample")
        return self

    @property
    def segment_length(self) -> int:
        return ms_to_samples(self.segment_ms, self.sample_rate)


def _check_pair(ref: Waveform, est: Waveform) -> None:
    if len(ref) != len(est):
        raise InvalidInputError(f"Reference has {len(ref)} samples, estimate {len(est)}")
    if ref.sample_rate != est.sample_rate:
        raise InvalidInputError(f"Sample rates differ: {ref.sample_rate} vs {est.sample_rate}")


def ssnr(ref: Waveform, est: Waveform, cfg: SsnrConfig = SsnrConfig()) -> float:
    """
    Segmental SNR in dB.

    The signals are cut into non-overlapping segments (a trailing partial
    segment is dropped). Segments whose reference mean power is below the
    silence threshold are skipped; the others contribute
    clamp(10 log10(sum ref^2 / sum (ref - est)^2), min, max).

    Args:
        ref: Clean reference
        est: Estimate
        cfg: SSNR configuration

    Returns:
        Mean clamped per-segment SNR
    """
    _check_pair(ref, est)
    seg = cfg.segment_length
    n_segments = len(ref) // seg
    if n_segments == 0:
        raise InvalidInputError(f"Signal of {len(ref)} samples is shorter than one {seg}-sample segment")

    r = ref.samples[:n_segments * seg].reshape(n_segments, seg)
    e = est.samples[:n_segments * seg].reshape(n_segments, seg)
    active = np.mean(r ** 2, axis=1) >= cfg.silence_threshold
    if not np.any(active):
        raise UndefinedMetricError("Every reference segment is silent; SSNR is undefined")

    signal = np.sum(r[active] ** 2, axis=1)
    error = np.sum((r[active] - e[active]) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        ratio = np.where(error > 0, 10.0 * np.log10(signal / np.where(error > 0, error, 1.0)), np.inf)
    return float(np.mean(np.clip(ratio, cfg.clamp_min_db, cfg.clamp_max_db)))


def snr_db(ref: Waveform, est_or_noise: Waveform, is_noise: bool = False) -> float:
    """
    Plain SNR in dB.

    Args:
        ref: Clean reference
        est_or_noise: Estimate (the error is ref - est) or, with is_noise, the noise itself
        is_noise: Treat the second signal as the noise

    Returns:
        10 log10(P_ref / P_diff); +inf when the difference is zero
    """
    _check_pair(ref, est_or_noise)
    p_ref = ref.power()
    if p_ref <= 0:
        raise InvalidInputError("Reference is silent; SNR is undefined")
    diff = est_or_noise.samples if is_noise else ref.samples - est_or_noise.samples
    p_diff = float(np.mean(diff ** 2))
    if p_diff == 0:
        return math.inf
    return float(10.0 * np.log10(p_ref / p_diff))
