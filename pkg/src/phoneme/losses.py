"""
Phoneme Loss Module

Cross-entropy over frame posteriors, summed over utterances and frames, and
top-k frame accuracy.
"""

from typing import Literal, Sequence

import numpy as np
import torch

from nnkernel.layers import NllGather
from phoneme.alignment import PhonemeFrameLabels
from phoneme.classifier import ProbMatrix
from utils.errors import AlignmentError, InvalidInputError

Reduction = Literal["sum", "mean"]

_nll = NllGather()


def phoneme_loss_tensor(probs: torch.Tensor, labels: torch.Tensor, reduction: Reduction = "sum") -> torch.Tensor:
    """
    Differentiable phoneme loss.

    Args:
        probs: Posteriors of shape (..., T, L)
        labels: Class indices of shape (..., T)
        reduction: "sum" gives -sum log p over all frames; "mean" divides by the frame count

    Returns:
        Scalar tensor
    """
    if tuple(probs.shape[:-1]) != tuple(labels.shape):
        raise InvalidInputError(f"Posteriors {tuple(probs.shape)} and labels {tuple(labels.shape)} do not agree")
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= probs.shape[-1]):
        raise InvalidInputError(f"Labels must lie in [0, {probs.shape[-1]})")
    total = _nll(probs, labels)
    if reduction == "sum":
        return total
    if reduction == "mean":
        return total / max(labels.numel(), 1)
    raise InvalidInputError(f"Unknown reduction '{reduction}'")


def phoneme_loss(probs: Sequence[ProbMatrix], labels: Sequence[PhonemeFrameLabels],
                 reduction: Reduction = "sum") -> float:
    """
    Phoneme loss of a batch: -sum_k sum_t log p[t, y_k^t].

    Args:
        probs: Posterior matrix per utterance
        labels: Frame labels per utterance
        reduction: "sum" (exact) or "mean" per frame

    Returns:
        The loss value
    """
    if len(probs) != len(labels):
        raise InvalidInputError(f"{len(probs)} posterior matrices but {len(labels)} label sequences")

    total, frames = 0.0, 0
    for p, y in zip(probs, labels):
        if p.num_frames != len(y):
            raise AlignmentError(p.num_frames, len(y), what="labels", utterance_id=y.utterance_id)
        if y.n_classes > p.n_classes:
            raise InvalidInputError(f"Labels use {y.n_classes} classes, posteriors have {p.n_classes}")
        value = phoneme_loss_tensor(torch.from_numpy(p.values), torch.from_numpy(y.labels), "sum")
        total += float(value)
        frames += len(y)

    if reduction == "mean":
        return total / max(frames, 1)
    return total


def topk_accuracy(p: ProbMatrix, labels: PhonemeFrameLabels, k: int) -> float:
    """
    Fraction of frames whose label is among the k largest posteriors.

    Ties are broken in favour of the lower class index.

    Args:
        p: Posterior matrix
        labels: Frame labels
        k: Number of top classes considered

    Returns:
        Accuracy in [0, 1]
    """
    if k < 1:
        raise InvalidInputError(f"k must be at least 1, got {k}")
    if k > p.n_classes:
        raise InvalidInputError(f"k = {k} exceeds the class count {p.n_classes}")
    if p.num_frames != len(labels):
        raise AlignmentError(p.num_frames, len(labels), what="labels", utterance_id=labels.utterance_id)
    if len(labels) == 0:
        raise InvalidInputError("Cannot compute accuracy over zero frames")

    values = p.values
    y = labels.labels
    true_prob = values[np.arange(len(y)), y][:, None]
    class_index = np.arange(p.n_classes)[None, :]
    # rank = classes strictly better, plus equal-probability classes with a lower index
    rank = np.sum(values > true_prob, axis=1) + np.sum((values == true_prob) & (class_index < y[:, None]), axis=1)
    return float(np.mean(rank < k))
