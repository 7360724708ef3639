"""
Alignment Module

Frame-level phoneme labels and their plain-text files (one integer class
index per 10 ms frame, one frame per line).
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from utils.errors import AlignmentError, InvalidInputError
from utils.utils import ensure_directory_exists


@dataclass(frozen=True)
class PhonemeFrameLabels:
    """Class index per frame of one utterance."""

    labels: np.ndarray
    n_classes: int
    utterance_id: str = ""

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise InvalidInputError(f"Labels must be one-dimensional, got shape {labels.shape}")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            raise InvalidInputError("Labels must be integer class indices")
        labels = labels.astype(np.int64)
        if self.n_classes < 1:
            raise InvalidInputError(f"Class count must be positive, got {self.n_classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise InvalidInputError(
                f"Labels{' of ' + self.utterance_id if self.utterance_id else ''} must lie in "
                f"[0, {self.n_classes}), found range [{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    def check_frames(self, num_frames: int, what: str = "MFCC") -> None:
        """Raise AlignmentError unless the label count equals num_frames."""
        if len(self.labels) != num_frames:
            raise AlignmentError(num_frames, len(self.labels), what=f"alignment vs {what}",
                                 utterance_id=self.utterance_id)


def read_alignment(file_path: Union[str, Path], n_classes: int,
                   utterance_id: Optional[str] = None) -> PhonemeFrameLabels:
    """
    Read an alignment file.

    Args:
        file_path: Path to the alignment file
        n_classes: Number of phoneme classes
        utterance_id: Utterance id (defaults to the file stem)

    Returns:
        The frame labels
    """
    path = Path(file_path)
    if not path.exists():
        raise FileNotFoundError(f"Alignment file not found: {path}")

    lines = [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    try:
        labels = np.array([int(line) for line in lines], dtype=np.int64)
    except ValueError as e:
        raise InvalidInputError(f"{path}: alignment lines must be integers ({e})") from e
    return PhonemeFrameLabels(labels, n_classes, utterance_id if utterance_id is not None else path.stem)


def write_alignment(file_path: Union[str, Path], labels: PhonemeFrameLabels) -> None:
    """
    Write an alignment file.

    Args:
        file_path: Path to the output file
        labels: Frame labels
    """
    path = Path(file_path)
    ensure_directory_exists(path.parent)
    path.write_text("".join(f"{int(label)}\n" for label in labels.labels), encoding="utf-8")
