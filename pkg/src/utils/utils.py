"""
Utility Module

This module provides utility functions shared by the PbDr enhancement packages:
JSON persistence, directory handling, seeding and environment defaults.
"""

import os
import json
import random
import hashlib
from pathlib import Path
from typing import Any, Iterable, Optional, Union

import numpy as np
import torch
from dotenv import load_dotenv

# Sample rate used by every ms-based config in the project
SAMPLE_RATE = 16000

load_dotenv()


def ensure_directory_exists(directory_path: Union[str, Path]) -> None:
    """
    Ensure a directory exists, creating it if necessary.

    Args:
        directory_path: Path to the directory
    """
    if str(directory_path):
        os.makedirs(directory_path, exist_ok=True)


def save_json(data: Any, file_path: Union[str, Path]) -> None:
    """
    Save data to a JSON file.

    Args:
        data: Data to save
        file_path: Path to the output file
    """
    # Ensure the directory exists
    ensure_directory_exists(os.path.dirname(str(file_path)))

    with open(file_path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, ensure_ascii=False)


def load_json(file_path: Union[str, Path]) -> Any:
    """
    Load data from a JSON file.

    Args:
        file_path: Path to the input file

    Returns:
        The loaded data
    """
    if not os.path.exists(file_path):
        raise FileNotFoundError(f"File not found: {file_path}")

    with open(file_path, 'r', encoding='utf-8') as f:
        return json.load(f)


def ms_to_samples(duration_ms: float, sample_rate: int = SAMPLE_RATE) -> int:
    """
    Convert a duration in milliseconds to a whole number of samples.

    Args:
        duration_ms: Duration in milliseconds
        sample_rate: Sample rate in Hz

    Returns:
        Number of samples (rounded to the nearest integer)
    """
    return int(round(duration_ms * sample_rate / 1000.0))


def seed_everything(seed: int) -> None:
    """
    Seed Python, numpy and torch generators and make torch deterministic.

    Args:
        seed: Seed value
    """
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def child_seed(seed: int, *keys: Union[int, str]) -> int:
    """
    Derive a reproducible sub-seed from a base seed and a sequence of keys.

    Args:
        seed: Base seed
        keys: Identifiers of the sub-stream (utterance index, split name, ...)

    Returns:
        A non-negative 32-bit seed
    """
    text = ":".join([str(seed)] + [str(k) for k in keys])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def hash_files(paths: Iterable[Union[str, Path]], extra: Optional[bytes] = None) -> str:
    """
    Compute a SHA-256 hex digest over the contents of several files.

    Args:
        paths: Files to hash, in the order given
        extra: Optional bytes mixed in before the files

    Returns:
        Hex digest string
    """
    sha = hashlib.sha256()
    if extra is not None:
        sha.update(extra)
    for path in paths:
        with open(path, 'rb') as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                sha.update(chunk)
    return sha.hexdigest()


def get_data_dir() -> Path:
    """
    Get the default data directory (``PBDR_DATA_DIR`` or ``data``).

    Returns:
        Path of the data directory
    """
    return Path(os.environ.get("PBDR_DATA_DIR", "data"))


def get_log_level() -> str:
    """
    Get the default log level (``PBDR_LOG_LEVEL`` or ``INFO``).

    Returns:
        Log level name
    """
    return os.environ.get("PBDR_LOG_LEVEL", "INFO").upper()
