"""
Phoneme-based Distribution Regularization Module

This module maps a frame's phoneme posterior vector P to a modulation pair
(gamma, beta) with two independent MLPs and applies the affine regularization

    out[f, c] = F[f, c] * gamma[f] + beta[f]

to the encoder feature map of that frame, sharing the pair across channels.
The mapper output layers start at zero weights with gamma bias 1 and beta
bias 0, so an untrained mapper leaves the features unchanged.
"""

from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np
import torch
import torch.nn as nn
from pydantic import PositiveInt

from nnkernel.layers import init_parameters, pooled_size
from phoneme.classifier import ProbMatrix
from utils.config import ConfigModel
from utils.errors import AlignmentError, InvalidInputError


class MapperConfig(ConfigModel):
    """Sizes of the posterior-to-modulation mapper."""

    hidden: PositiveInt = 128


class PlacementConfig(ConfigModel):
    """Encoder convolution layer whose (post-activation, pre-pooling) output is conditioned."""

    layer_index: Literal[1, 2] = 2

    def n_bins(self, input_bins: int) -> int:
        """
        Frequency size F_N of the placement layer.

        Args:
            input_bins: Number of STFT bins fed to the encoder

        Returns:
            input_bins for layer 1, the once-pooled size for layer 2
        """
        return input_bins if self.layer_index == 1 else pooled_size(input_bins)


@dataclass(frozen=True)
class ModulationPair:
    """Scale and bias vectors of length F_N (one pair per frame, or stacked T x F_N)."""

    gamma: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=np.float64)
        beta = np.asarray(self.beta, dtype=np.float64)
        if gamma.shape != beta.shape or gamma.ndim not in (1, 2):
            raise InvalidInputError(f"gamma {gamma.shape} and beta {beta.shape} must be equal-shape vectors")
        if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(beta))):
            raise InvalidInputError("Modulation parameters must be finite")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "beta", beta)

    @property
    def n_bins(self) -> int:
        return self.gamma.shape[-1]


@dataclass(frozen=True)
class FeatureMap:
    """F_N x C_N feature map of one frame, or T x F_N x C_N stacked over frames."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim not in (2, 3):
            raise InvalidInputError(f"Feature map must be F x C or T x F x C, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("Feature map contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def n_bins(self) -> int:
        return self.values.shape[-2]


class ModulationMapper(nn.Module):
    """Two MLPs L -> hidden (relu) -> F_N producing gamma and beta."""

    def __init__(self, n_classes: int, n_bins: int, cfg: MapperConfig = MapperConfig()):
        """
        Initialize the mapper at the identity modulation.

        Args:
            n_classes: Posterior width L
            n_bins: Output width F_N
            cfg: Mapper sizes
        """
        super().__init__()
        self.n_classes = n_classes
        self.n_bins = n_bins
        self.gamma_net = nn.Sequential(nn.Linear(n_classes, cfg.hidden), nn.ReLU(), nn.Linear(cfg.hidden, n_bins))
        self.beta_net = nn.Sequential(nn.Linear(n_classes, cfg.hidden), nn.ReLU(), nn.Linear(cfg.hidden, n_bins))
        init_parameters(self)
        self.reset_identity()

    def reset_identity(self) -> None:
        """Zero the output layers and set the gamma bias to 1 and the beta bias to 0."""
        with torch.no_grad():
            for net, bias in ((self.gamma_net, 1.0), (self.beta_net, 0.0)):
                net[-1].weight.zero_()
                net[-1].bias.fill_(bias)

    def forward(self, probs: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Map posteriors to modulation pairs.

        Args:
            probs: Posteriors of shape (..., L)

        Returns:
            Tuple of (gamma, beta), each of shape (..., F_N)
        """
        if probs.shape[-1] != self.n_classes:
            raise InvalidInputError(f"Mapper expects {self.n_classes} classes, got width {probs.shape[-1]}")
        return self.gamma_net(probs), self.beta_net(probs)


def modulate_tensor(features: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor) -> torch.Tensor:
    """
    Channel-shared affine modulation of encoder features.

    Args:
        features: Feature maps of shape (B, C, T, F_N)
        gamma: Scales of shape (B, T, F_N)
        beta: Biases of shape (B, T, F_N)

    Returns:
        features * gamma + beta, broadcast over channels
    """
    if features.shape[-1] != gamma.shape[-1] or gamma.shape != beta.shape:
        raise InvalidInputError(
            f"Feature frequency size {features.shape[-1]} does not match modulation length {gamma.shape[-1]}"
        )
    return features * gamma.unsqueeze(1) + beta.unsqueeze(1)


class PbdrModulation(nn.Module):
    """Frame-wise conditioning of a (B, C, T, F_N) feature stream on (B, T, L) posteriors."""

    def __init__(self, n_classes: int, n_bins: int, cfg: MapperConfig = MapperConfig()):
        super().__init__()
        self.mapper = ModulationMapper(n_classes, n_bins, cfg)

    def forward(self, features: torch.Tensor, probs: torch.Tensor) -> torch.Tensor:
        if features.shape[2] != probs.shape[1]:
            raise AlignmentError(features.shape[2], probs.shape[1], what="phoneme posteriors")
        if features.shape[-1] != self.mapper.n_bins:
            raise InvalidInputError(
                f"Placement layer has {features.shape[-1]} bins, mapper produces {self.mapper.n_bins}"
            )
        gamma, beta = self.mapper(probs)
        return modulate_tensor(features, gamma, beta)


def modulation_params(P: np.ndarray, mapper: ModulationMapper) -> ModulationPair:
    """
    Modulation pair of one frame (or of each row of a T x L matrix).

    Args:
        P: Posterior vector of length L
        mapper: Mapper networks

    Returns:
        (gamma, beta), each of length F_N
    """
    P = np.asarray(P, dtype=np.float64)
    if P.ndim not in (1, 2) or P.shape[-1] != mapper.n_classes:
        raise InvalidInputError(f"Posterior vector must have width {mapper.n_classes}, got shape {P.shape}")
    dtype = next(mapper.parameters()).dtype
    with torch.no_grad():
        gamma, beta = mapper(torch.as_tensor(P, dtype=dtype))
    return ModulationPair(gamma.double().numpy(), beta.double().numpy())


def modulate(F: FeatureMap, m: ModulationPair) -> FeatureMap:
    """
    Apply out[f, c] = F[f, c] * gamma[f] + beta[f].

    Args:
        F: Feature map of one frame (F_N x C_N) or stacked frames (T x F_N x C_N with T x F_N pairs)
        m: Modulation pair

    Returns:
        The modulated feature map
    """
    if F.n_bins != m.n_bins:
        raise InvalidInputError(f"Feature map has {F.n_bins} bins, modulation pair has {m.n_bins}")
    if m.gamma.ndim == 2 and (F.values.ndim != 3 or F.values.shape[0] != m.gamma.shape[0]):
        raise InvalidInputError("Stacked modulation pairs need a feature map with the same frame count")
    return FeatureMap(F.values * m.gamma[..., :, None] + m.beta[..., :, None])


def condition_stream(features: FeatureMap, probs: ProbMatrix, mapper: ModulationMapper) -> FeatureMap:
    """
    Modulate every frame of a feature stream with the pair mapped from its posterior row.

    Args:
        features: T x F_N x C_N feature stream at the placement layer
        probs: T x L posteriors
        mapper: Mapper networks

    Returns:
        T x F_N x C_N modulated stream
    """
    if features.values.ndim != 3:
        raise InvalidInputError(f"Feature stream must be T x F x C, got shape {features.values.shape}")
    if features.values.shape[0] != probs.num_frames:
        raise AlignmentError(features.values.shape[0], probs.num_frames, what="phoneme posteriors")
    return modulate(features, modulation_params(probs.values, mapper))
