"""
Enhancement Network Module

This module implements the encoder / residual / decoder network that turns a
noisy complex spectrogram into an amplitude gain and a phase:

    encoder   three convolutions, each followed by frequency max-pooling
    residual  blocks of two convolutions with an additive shortcut
    decoder   three transposed convolutions restoring the frequency size,
              fed with channel-concatenated encoder skips, and an output
              convolution emitting (gain logit, a, b)

Pooling only acts on frequency, so every layer keeps the frame count and
frame-wise conditioning lines up with the MFCC frames. A conditioner can be
attached at encoder layer 1 or 2: PbDr modulation or posterior concatenation.
"""

from typing import Dict, Literal, Optional, Tuple

import torch
import torch.nn as nn
from pydantic import PositiveInt, field_validator

from enhancer.spectrum import gain_phase_tensor
from nnkernel.layers import FrequencyMaxPool, FrequencyUpsample, init_parameters, pooled_size
from pbdr.modulation import MapperConfig, PbdrModulation
from utils.config import ConfigModel
from utils.errors import AlignmentError, InvalidInputError

Conditioning = Literal["none", "pbdr", "concat"]


class EnhancerConfig(ConfigModel):
    """Sizes of the enhancement network."""

    channels: Tuple[PositiveInt, PositiveInt, PositiveInt] = (16, 32, 64)
    residual_blocks: int = 4
    kernel_size: Tuple[PositiveInt, PositiveInt] = (3, 5)
    residual_kernel_size: Tuple[PositiveInt, PositiveInt] = (3, 3)
    activation: Literal["relu", "tanh"] = "relu"
    concat_channels: PositiveInt = 8

    @field_validator("kernel_size", "residual_kernel_size")
    @classmethod
    def _odd(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        if any(k % 2 == 0 for k in value):
            raise ValueError(f"kernel sizes must be odd, got {value}")
        return value

    @field_validator("residual_blocks")
    @classmethod
    def _non_negative(cls, value: int) -> int:
        if value < 0:
            raise ValueError("residual_blocks must be >= 0")
        return value


def _activation(name: str) -> nn.Module:
    return nn.ReLU() if name == "relu" else nn.Tanh()


class ResidualBlock(nn.Module):
    """act(x + conv_b(act(conv_a(x))))."""

    def __init__(self, channels: int, kernel_size: Tuple[int, int], activation: str):
        super().__init__()
        self.conv_a = nn.Conv2d(channels, channels, kernel_size, padding="same")
        self.conv_b = nn.Conv2d(channels, channels, kernel_size, padding="same")
        self.act = _activation(activation)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(x + self.conv_b(self.act(self.conv_a(x))))


class ConcatConditioning(nn.Module):
    """Project (B, T, L) posteriors to a few channels and append them, tiled over frequency."""

    def __init__(self, n_classes: int, channels: int):
        super().__init__()
        self.n_classes = n_classes
        self.channels = channels
        self.project = nn.Linear(n_classes, channels)

    def forward(self, features: torch.Tensor, probs: torch.Tensor) -> torch.Tensor:
        if features.shape[2] != probs.shape[1]:
            raise AlignmentError(features.shape[2], probs.shape[1], what="phoneme posteriors")
        if probs.shape[-1] != self.n_classes:
            raise InvalidInputError(f"Expected {self.n_classes} classes, got width {probs.shape[-1]}")
        extra = self.project(probs).permute(0, 2, 1).unsqueeze(-1)
        extra = extra.expand(-1, -1, -1, features.shape[-1])
        return torch.cat([features, extra], dim=1)


class Enhancer(nn.Module):
    """Encoder / residual / decoder network on complex spectrograms of shape (B, T, F)."""

    def __init__(self,
                 cfg: EnhancerConfig,
                 n_bins: int,
                 conditioning: Conditioning = "none",
                 placement: Optional[int] = None,
                 n_classes: Optional[int] = None,
                 mapper_cfg: MapperConfig = MapperConfig()):
        """
        Initialize the network.

        Args:
            cfg: Network sizes
            n_bins: Number of STFT bins F
            conditioning: Conditioning hook type
            placement: Encoder layer (1 or 2) whose output is conditioned
            n_classes: Posterior width, required with a conditioning hook
            mapper_cfg: Mapper sizes for PbDr conditioning
        """
        super().__init__()
        if conditioning != "none" and (placement not in (1, 2) or not n_classes):
            raise InvalidInputError(f"{conditioning} conditioning needs placement 1 or 2 and a class count")
        self.cfg = cfg
        self.conditioning = conditioning
        self.placement = placement if conditioning != "none" else None

        c1, c2, c3 = cfg.channels
        f1 = n_bins
        f2 = pooled_size(f1)
        f3 = pooled_size(f2)
        f4 = pooled_size(f3)
        self.freq_sizes = (f1, f2, f3, f4)
        extra = cfg.concat_channels if conditioning == "concat" else 0
        e1_channels = c1 + (extra if placement == 1 else 0)
        e2_channels = c2 + (extra if placement == 2 else 0)

        if conditioning == "pbdr":
            self.conditioner: Optional[nn.Module] = PbdrModulation(n_classes, f1 if placement == 1 else f2, mapper_cfg)
        elif conditioning == "concat":
            self.conditioner = ConcatConditioning(n_classes, cfg.concat_channels)
        else:
            self.conditioner = None

        k = cfg.kernel_size
        self.act = _activation(cfg.activation)
        self.pool = FrequencyMaxPool()
        self.conv1 = nn.Conv2d(2, c1, k, padding="same")
        self.conv2 = nn.Conv2d(e1_channels, c2, k, padding="same")
        self.conv3 = nn.Conv2d(e2_channels, c3, k, padding="same")
        self.blocks = nn.ModuleList([
            ResidualBlock(c3, cfg.residual_kernel_size, cfg.activation) for _ in range(cfg.residual_blocks)
        ])
        self.up1 = FrequencyUpsample(2 * c3, c2, k, f4, f3)
        self.up2 = FrequencyUpsample(c2 + c3, c1, k, f3, f2)
        self.up3 = FrequencyUpsample(c1 + e2_channels, c1, k, f2, f1)
        self.out = nn.Conv2d(c1 + e1_channels, 3, k, padding="same")
        init_parameters(self)
        if conditioning == "pbdr":
            self.conditioner.mapper.reset_identity()

    def _condition(self, layer: int, features: torch.Tensor, probs: Optional[torch.Tensor]) -> torch.Tensor:
        if self.conditioner is None or layer != self.placement:
            return features
        if probs is None:
            raise InvalidInputError(f"{self.conditioning} conditioning needs phoneme posteriors")
        return self.conditioner(features, probs)

    def _check_frames(self, name: str, x: torch.Tensor, n_frames: int) -> None:
        if x.shape[2] != n_frames:
            raise InvalidInputError(f"Layer {name} changed the frame count from {n_frames} to {x.shape[2]}")

    def encode(self, spec: torch.Tensor, probs: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, Dict[str, torch.Tensor]]:
        """
        Encoder pass.

        Args:
            spec: Complex spectrogram of shape (B, T, F)
            probs: Posteriors of shape (B, T, L) for a conditioned network

        Returns:
            Tuple of (deepest pooled features, skip features keyed "e1", "e2", "e3")
        """
        if spec.dim() != 3 or spec.shape[-1] != self.freq_sizes[0]:
            raise InvalidInputError(
                f"Enhancer expects (B, T, {self.freq_sizes[0]}) spectra, got {tuple(spec.shape)}"
            )
        n_frames = spec.shape[1]
        if probs is not None and probs.shape[1] != n_frames:
            raise AlignmentError(n_frames, probs.shape[1], what="phoneme posteriors")

        x = torch.stack([spec.real, spec.imag], dim=1)
        e1 = self._condition(1, self.act(self.conv1(x)), probs)
        e2 = self._condition(2, self.act(self.conv2(self.pool(e1))), probs)
        e3 = self.act(self.conv3(self.pool(e2)))
        p3 = self.pool(e3)
        for name, value in (("e1", e1), ("e2", e2), ("e3", e3), ("p3", p3)):
            self._check_frames(name, value, n_frames)
        return p3, {"e1": e1, "e2": e2, "e3": e3}

    def residual(self, x: torch.Tensor) -> torch.Tensor:
        """Residual blocks at the deepest resolution."""
        for block in self.blocks:
            x = block(x)
        return x

    def decode(self, r: torch.Tensor, p3: torch.Tensor, skips: Dict[str, torch.Tensor]) -> torch.Tensor:
        """
        Decoder pass.

        Args:
            r: Residual block output (B, C3, T, F4)
            p3: Deepest pooled encoder features (B, C3, T, F4)
            skips: Encoder features "e1", "e2", "e3"

        Returns:
            Raw output of shape (B, 3, T, F) holding (gain logit, a, b)
        """
        if r.shape != p3.shape:
            raise InvalidInputError(f"Residual output {tuple(r.shape)} does not match encoder output {tuple(p3.shape)}")
        n_frames = r.shape[2]
        d1 = self.act(self.up1(torch.cat([r, p3], dim=1)))
        d2 = self.act(self.up2(torch.cat([d1, skips["e3"]], dim=1)))
        d3 = self.act(self.up3(torch.cat([d2, skips["e2"]], dim=1)))
        out = self.out(torch.cat([d3, skips["e1"]], dim=1))
        for name, value in (("d1", d1), ("d2", d2), ("d3", d3), ("out", out)):
            self._check_frames(name, value, n_frames)
        return out

    def forward(self, spec: torch.Tensor, probs: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Gain and phase for a noisy spectrogram.

        Args:
            spec: Complex spectrogram of shape (B, T, F)
            probs: Posteriors of shape (B, T, L) for a conditioned network

        Returns:
            Tuple of (gain (B, T, F), unit complex phase (B, T, F))
        """
        p3, skips = self.encode(spec, probs)
        return gain_phase_tensor(self.decode(self.residual(p3), p3, skips))
