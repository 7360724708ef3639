"""
Training Objective Module

This module implements the combined objective

    L_all = sum |S_hat - S| + lambda * L_phoneme

where the spectral term is an L1 distance over real and imaginary parts and
S_hat is first passed through the STFT consistency projection, so the loss is
measured on a spectrum that some waveform actually has.
"""

from typing import Literal, Optional, Tuple

import torch
from pydantic import Field, NonNegativeFloat

from dsp.stft import ComplexSpectrogram, StftConfig, consistency_project_tensor
from nnkernel.layers import L1Distance
from phoneme.alignment import PhonemeFrameLabels
from phoneme.classifier import ProbMatrix
from phoneme.losses import phoneme_loss_tensor
from utils.config import ConfigModel
from utils.errors import AlignmentError, InvalidInputError

_l1 = L1Distance()


class LossConfig(ConfigModel):
    """Weights and options of the combined objective."""

    lambda_: NonNegativeFloat = Field(default=1.0, alias="lambda")
    consistency: bool = True
    reduction: Literal["sum", "mean"] = "sum"


def spectral_l1_tensor(s_hat: torch.Tensor,
                       s: torch.Tensor,
                       stft_cfg: StftConfig,
                       length: Optional[int] = None,
                       consistency: bool = True,
                       reduction: str = "sum") -> torch.Tensor:
    """
    Differentiable spectral L1 term.

    Args:
        s_hat: Estimated complex spectrum of shape (..., T, F)
        s: Clean complex spectrum, same shape
        stft_cfg: STFT configuration used for the projection
        length: Waveform length used between the two transforms
        consistency: Project s_hat onto consistent spectra first
        reduction: "sum" over bins, or "mean" per complex bin

    Returns:
        Scalar tensor
    """
    if s_hat.shape != s.shape:
        raise InvalidInputError(f"Spectra have different shapes: {tuple(s_hat.shape)} vs {tuple(s.shape)}")
    if consistency:
        s_hat = consistency_project_tensor(s_hat, stft_cfg, length)
    total = _l1(s_hat, s)
    if reduction == "mean":
        return total / max(s.numel(), 1)
    return total


def combined_loss_tensor(s_hat: torch.Tensor,
                         s: torch.Tensor,
                         probs: Optional[torch.Tensor],
                         labels: Optional[torch.Tensor],
                         cfg: LossConfig,
                         stft_cfg: StftConfig,
                         length: Optional[int] = None) -> Tuple[torch.Tensor, torch.Tensor, Optional[torch.Tensor]]:
    """
    Differentiable combined objective.

    Args:
        s_hat: Estimated complex spectrum (..., T, F)
        s: Clean complex spectrum (..., T, F)
        probs: Posteriors (..., T, L), or None for variants without a classifier
        labels: Frame labels (..., T), or None
        cfg: Loss configuration
        stft_cfg: STFT configuration
        length: Waveform length used by the consistency projection

    Returns:
        Tuple of (total, spectral term, phoneme term or None)
    """
    spectral = spectral_l1_tensor(s_hat, s, stft_cfg, length, cfg.consistency, cfg.reduction)
    if probs is None:
        return spectral, spectral, None
    if labels is None:
        raise InvalidInputError("Phoneme posteriors were given without labels")
    if probs.shape[-2] != s.shape[-2]:
        raise AlignmentError(s.shape[-2], probs.shape[-2], what="phoneme posteriors")
    phoneme = phoneme_loss_tensor(probs, labels, cfg.reduction)
    return spectral + cfg.lambda_ * phoneme, spectral, phoneme


def spectral_l1(S_hat: ComplexSpectrogram, S: ComplexSpectrogram, cfg: LossConfig = LossConfig()) -> float:
    """
    Spectral L1 between an estimate and the clean spectrum.

    Args:
        S_hat: Estimated spectrogram
        S: Clean spectrogram
        cfg: Loss configuration

    Returns:
        sum |Re, Im of project(S_hat) - S| (or of S_hat - S without consistency)
    """
    length = S_hat.length if S_hat.length is not None else S.length
    with torch.no_grad():
        value = spectral_l1_tensor(torch.from_numpy(S_hat.values), torch.from_numpy(S.values),
                                   S_hat.config, length, cfg.consistency, cfg.reduction)
    return float(value)


def combined_loss(S_hat: ComplexSpectrogram,
                  S: ComplexSpectrogram,
                  probs: ProbMatrix,
                  labels: PhonemeFrameLabels,
                  cfg: LossConfig = LossConfig()) -> float:
    """
    spectral_l1 + lambda * phoneme_loss for one utterance.

    Args:
        S_hat: Estimated spectrogram
        S: Clean spectrogram
        probs: Posteriors of the utterance
        labels: Frame labels of the utterance
        cfg: Loss configuration

    Returns:
        The combined loss
    """
    if probs.num_frames != len(labels):
        raise AlignmentError(probs.num_frames, len(labels), what="labels", utterance_id=labels.utterance_id)
    length = S_hat.length if S_hat.length is not None else S.length
    with torch.no_grad():
        total, _, _ = combined_loss_tensor(
            torch.from_numpy(S_hat.values), torch.from_numpy(S.values),
            torch.from_numpy(probs.values), torch.from_numpy(labels.labels),
            cfg, S_hat.config, length,
        )
    return float(total)
