"""
Phoneme Classifier Module

This module implements the frame-wise phoneme classifier: a CBHG-style front
end (1-D convolution bank, time max-pooling, two 1-D projections with a
residual connection, highway stack, bidirectional GRU) followed by a dense
classification layer and a per-frame softmax.

Time resolution is preserved end to end, so the output has one posterior row
per MFCC frame.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
from pydantic import PositiveInt

from dsp.features import MfccFrames
from nnkernel.layers import BiGRU, FrameSoftmax, Highway, TimeMaxPool, init_parameters
from utils.config import ConfigModel
from utils.errors import InvalidInputError

# Row-sum tolerance of a posterior matrix
ROW_SUM_TOLERANCE = 1e-6


class ClassifierConfig(ConfigModel):
    """Sizes of the CBHG classifier."""

    n_inputs: PositiveInt = 13
    bank_size: PositiveInt = 8
    bank_channels: PositiveInt = 32
    projection_channels: PositiveInt = 64
    highway_layers: PositiveInt = 2
    highway_width: PositiveInt = 64
    gru_hidden: PositiveInt = 64
    n_classes: PositiveInt = 72
    projection_kernel: PositiveInt = 3


@dataclass(frozen=True)
class ProbMatrix:
    """T x L matrix of per-frame phoneme posteriors."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InvalidInputError(f"Posterior matrix must be T x L, got shape {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values < 0) or np.any(values > 1):
            raise InvalidInputError("Posteriors must be finite probabilities")
        if values.shape[0] and np.max(np.abs(values.sum(axis=1) - 1.0)) > ROW_SUM_TOLERANCE:
            raise InvalidInputError("Posterior rows must sum to 1")
        object.__setattr__(self, "values", values)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_classes(self) -> int:
        return self.values.shape[1]


class PhonemeClassifier(nn.Module):
    """CBHG front end plus classification head, on (B, T, n_inputs) MFCC tensors."""

    def __init__(self, cfg: ClassifierConfig):
        """
        Initialize the classifier.

        Args:
            cfg: Classifier sizes
        """
        super().__init__()
        self.cfg = cfg
        self.register_buffer("feature_mean", torch.zeros(cfg.n_inputs))
        self.register_buffer("feature_std", torch.ones(cfg.n_inputs))

        self.bank = nn.ModuleList([
            nn.Conv1d(cfg.n_inputs, cfg.bank_channels, kernel_size=k, padding="same")
            for k in range(1, cfg.bank_size + 1)
        ])
        self.pool = TimeMaxPool()
        bank_width = cfg.bank_size * cfg.bank_channels
        self.proj1 = nn.Conv1d(bank_width, cfg.projection_channels, cfg.projection_kernel, padding="same")
        self.proj2 = nn.Conv1d(cfg.projection_channels, cfg.n_inputs, cfg.projection_kernel, padding="same")
        self.prenet = nn.Linear(cfg.n_inputs, cfg.highway_width)
        self.highways = nn.ModuleList([Highway(cfg.highway_width) for _ in range(cfg.highway_layers)])
        self.gru = BiGRU(cfg.highway_width, cfg.gru_hidden)
        self.output = nn.Linear(2 * cfg.gru_hidden, cfg.n_classes)
        self.softmax = FrameSoftmax()
        init_parameters(self)

    def set_feature_statistics(self, mean: np.ndarray, std: np.ndarray) -> None:
        """
        Store the per-coefficient standardization statistics.

        Args:
            mean: Mean of each MFCC coefficient over the training set
            std: Standard deviation of each coefficient
        """
        mean = torch.as_tensor(np.asarray(mean), dtype=self.feature_mean.dtype)
        std = torch.as_tensor(np.asarray(std), dtype=self.feature_std.dtype)
        if mean.shape != self.feature_mean.shape or std.shape != self.feature_std.shape:
            raise InvalidInputError(f"Feature statistics must have {self.cfg.n_inputs} entries")
        self.feature_mean.copy_(mean)
        self.feature_std.copy_(std)

    def logits(self, mfcc: torch.Tensor) -> torch.Tensor:
        """
        Unnormalized class scores.

        Args:
            mfcc: MFCC frames of shape (B, T, n_inputs)

        Returns:
            Tensor of shape (B, T, n_classes)
        """
        if mfcc.dim() != 3 or mfcc.shape[-1] != self.cfg.n_inputs:
            raise InvalidInputError(f"Classifier expects (B, T, {self.cfg.n_inputs}) input, got {tuple(mfcc.shape)}")
        if mfcc.shape[1] == 0:
            raise InvalidInputError("Classifier input has no frames")

        x = ((mfcc - self.feature_mean) / self.feature_std).transpose(1, 2)
        bank = torch.cat([torch.relu(conv(x)) for conv in self.bank], dim=1)
        pooled = self.pool(bank)
        proj = torch.relu(self.proj1(pooled))
        residual = (self.proj2(proj) + x).transpose(1, 2)

        h = self.prenet(residual)
        for highway in self.highways:
            h = highway(h)
        out = self.output(self.gru(h))
        if out.shape[1] != mfcc.shape[1]:
            raise InvalidInputError(f"Classifier changed the frame count from {mfcc.shape[1]} to {out.shape[1]}")
        return out

    def forward(self, mfcc: torch.Tensor) -> torch.Tensor:
        """
        Per-frame posteriors.

        Args:
            mfcc: MFCC frames of shape (B, T, n_inputs)

        Returns:
            Row-stochastic tensor of shape (B, T, n_classes)
        """
        return self.softmax(self.logits(mfcc))


def classify_frames(m: MfccFrames, classifier: PhonemeClassifier) -> ProbMatrix:
    """
    Classify every frame of one utterance.

    Args:
        m: MFCC frames
        classifier: Trained classifier

    Returns:
        T x L posterior matrix
    """
    if m.num_frames == 0:
        raise InvalidInputError("Cannot classify an utterance with zero frames")
    dtype: Optional[torch.dtype] = next(classifier.parameters()).dtype
    with torch.no_grad():
        probs = classifier(torch.as_tensor(m.values, dtype=dtype).unsqueeze(0))[0]
    return ProbMatrix(probs.double().numpy())
