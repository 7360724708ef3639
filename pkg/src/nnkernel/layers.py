"""
Operator Set

Differentiable building blocks shared by the classifier, the PbDr mapper and the
enhancement network. Standard operators (dense, 2-D/1-D convolution, GRU,
activations) come straight from torch.nn; this module adds the pooling,
upsampling, highway, gather and loss operators those networks need, plus
parameter initialization.
"""

import math
from typing import Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from utils.errors import InvalidInputError

# Floor applied to probabilities before taking logs
LOG_PROB_FLOOR = 1e-12


def pooled_size(size: int) -> int:
    """Output length of a width-2, stride-2 ceil-mode pooling."""
    return (size + 1) // 2


def init_parameters(module: nn.Module) -> None:
    """
    Uniform fan-in initialization for weights, zeros for biases.

    Args:
        module: Module whose parameters are (re)initialized in place
    """
    for sub in module.modules():
        if isinstance(sub, (nn.Linear, nn.Conv1d, nn.Conv2d)):
            fan_in = sub.weight[0].numel()
            bound = 1.0 / math.sqrt(fan_in)
            nn.init.uniform_(sub.weight, -bound, bound)
            if sub.bias is not None:
                nn.init.zeros_(sub.bias)
        elif isinstance(sub, nn.ConvTranspose2d):
            # weight layout is (in, out, kh, kw); each output sees in * kh * kw taps
            fan_in = sub.weight.shape[0] * sub.weight.shape[2] * sub.weight.shape[3]
            bound = 1.0 / math.sqrt(fan_in)
            nn.init.uniform_(sub.weight, -bound, bound)
            if sub.bias is not None:
                nn.init.zeros_(sub.bias)
        elif isinstance(sub, nn.GRU):
            bound = 1.0 / math.sqrt(sub.hidden_size)
            for name, param in sub.named_parameters():
                if name.startswith("weight"):
                    nn.init.uniform_(param, -bound, bound)
                else:
                    nn.init.zeros_(param)


class FrequencyMaxPool(nn.Module):
    """Max-pool of width 2, stride 2 along frequency (ceil mode), on (B, C, T, F) tensors."""

    def __init__(self):
        super().__init__()
        self.pool = nn.MaxPool2d(kernel_size=(1, 2), stride=(1, 2), ceil_mode=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.pool(x)


class TimeMaxPool(nn.Module):
    """Width-2, stride-1 max-pool over time on (B, C, T) tensors; the last frame is replicated so T is kept."""

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        padded = torch.cat([x, x[..., -1:]], dim=-1)
        return F.max_pool1d(padded, kernel_size=2, stride=1)


class FrequencyUpsample(nn.Module):
    """
    Transposed 2-D convolution doubling the frequency axis of (B, C, T, F) tensors.

    The output padding is chosen so that f_in bins map to exactly f_out bins
    (2 * f_in - 1 or 2 * f_in), which lets the decoder mirror a ceil-mode encoder.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: Tuple[int, int], f_in: int, f_out: int):
        super().__init__()
        kt, kf = kernel_size
        if kt % 2 == 0 or kf % 2 == 0:
            raise InvalidInputError(f"Kernel sizes must be odd, got {kernel_size}")
        output_padding = f_out - (2 * f_in - 1)
        if output_padding not in (0, 1):
            raise InvalidInputError(f"Cannot upsample {f_in} bins to {f_out} bins with stride 2")
        self.f_in = f_in
        self.f_out = f_out
        self.deconv = nn.ConvTranspose2d(
            in_channels,
            out_channels,
            kernel_size=kernel_size,
            stride=(1, 2),
            padding=(kt // 2, kf // 2),
            output_padding=(0, output_padding),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.f_in:
            raise InvalidInputError(f"Expected {self.f_in} frequency bins, got {x.shape[-1]}")
        return self.deconv(x)


class Highway(nn.Module):
    """Highway layer: H(x) * T(x) + x * (1 - T(x)) with relu H and sigmoid T."""

    def __init__(self, width: int):
        super().__init__()
        self.transform = nn.Linear(width, width)
        self.gate = nn.Linear(width, width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = torch.relu(self.transform(x))
        t = torch.sigmoid(self.gate(x))
        return h * t + x * (1.0 - t)


class BiGRU(nn.Module):
    """Bidirectional GRU over time on (B, T, D) tensors; outputs (B, T, 2 * hidden)."""

    def __init__(self, input_size: int, hidden_size: int):
        super().__init__()
        self.gru = nn.GRU(input_size, hidden_size, batch_first=True, bidirectional=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out, _ = self.gru(x)
        return out


class Add(nn.Module):
    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        return a + b


class Multiply(nn.Module):
    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        return a * b


class Concat(nn.Module):
    """Concatenate along the channel axis (dim 1)."""

    def __init__(self, dim: int = 1):
        super().__init__()
        self.dim = dim

    def forward(self, *tensors: torch.Tensor) -> torch.Tensor:
        return torch.cat(tensors, dim=self.dim)


class FrameSoftmax(nn.Module):
    """Softmax over the class axis (last dim) of each frame."""

    def forward(self, logits: torch.Tensor) -> torch.Tensor:
        return torch.softmax(logits, dim=-1)


class L1Distance(nn.Module):
    """Sum of absolute differences; complex inputs use their real and imaginary parts."""

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        diff = a - b
        if diff.is_complex():
            return diff.real.abs().sum() + diff.imag.abs().sum()
        return diff.abs().sum()


class NllGather(nn.Module):
    """Negative log-likelihood of the labelled class, summed over frames."""

    def forward(self, probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        picked = probs.gather(-1, labels.long().unsqueeze(-1)).squeeze(-1)
        return -torch.log(picked.clamp_min(LOG_PROB_FLOOR)).sum()


class Leaf(nn.Module):
    """Trainable tensor exposed as an operator output (used to check parameter-free operators)."""

    def __init__(self, value: torch.Tensor):
        super().__init__()
        self.value = nn.Parameter(value.clone())

    def forward(self) -> torch.Tensor:
        return self.value


class WeightedSum(nn.Module):
    """Scalar <x, w> against a fixed weight tensor of the same shape."""

    def __init__(self, weights: torch.Tensor):
        super().__init__()
        self.register_buffer("weights", weights.clone())

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.is_complex():
            return (x.real * self.weights).sum() + (x.imag * self.weights).sum()
        return (x * self.weights).sum()
