"""
Checkpoint Module

This module stores named float32 tensors as a checkpoint directory:

    <dir>/manifest.json     format version, tensor entries, run metadata
    <dir>/<name>.bin        little-endian float32 blob per tensor

Saving goes through a temporary sibling directory that is renamed into place.
The previous checkpoint is moved to a "<dir>.old" sibling first and removed
only after the new one is in place; loading restores it from there when the
save was interrupted between the two renames.
"""

import json
import os
import shutil
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np
import torch

from utils.errors import CheckpointError
from utils.logging_utils import get_logger
from utils.utils import ensure_directory_exists, hash_files, load_json, save_json

logger = get_logger(__name__)

FORMAT_VERSION = 1
MANIFEST_FILE = "manifest.json"
BLOB_DTYPE = np.dtype("<f4")


def _entry(name: str, tensor: torch.Tensor) -> Dict[str, Any]:
    return {
        "name": name,
        "shape": list(tensor.shape),
        "dtype": "float32",
        "file": f"{name}.bin",
        "offset": 0,
        "nbytes": int(tensor.numel()) * BLOB_DTYPE.itemsize,
    }


def _old_dir(directory: Path) -> Path:
    return directory.with_name(directory.name + ".old")


def _restore_previous(directory: Path) -> None:
    old_dir = _old_dir(directory)
    if not directory.exists() and old_dir.exists():
        logger.warning("Restoring checkpoint %s from an interrupted save", directory)
        os.replace(old_dir, directory)


def save_checkpoint(directory: Union[str, Path],
                    tensors: Mapping[str, torch.Tensor],
                    metadata: Optional[Dict[str, Any]] = None) -> str:
    """
    Write tensors and metadata as a checkpoint directory.

    Args:
        directory: Target directory (replaced if it exists)
        tensors: Tensors keyed by name; stored as float32
        metadata: JSON-serializable metadata (e.g. the run config)

    Returns:
        The checkpoint hash
    """
    directory = Path(directory)
    _restore_previous(directory)
    tmp_dir = directory.with_name(directory.name + ".tmp")
    if tmp_dir.exists():
        shutil.rmtree(tmp_dir)
    ensure_directory_exists(tmp_dir)

    entries = []
    for name in sorted(tensors):
        if "/" in name or os.sep in name:
            raise CheckpointError(f"Tensor name '{name}' cannot contain a path separator")
        tensor = tensors[name].detach().cpu().to(torch.float32).contiguous()
        entry = _entry(name, tensor)
        with open(tmp_dir / entry["file"], "wb") as f:
            f.write(tensor.numpy().astype(BLOB_DTYPE, copy=False).tobytes())
        entries.append(entry)

    save_json({"format_version": FORMAT_VERSION, "tensors": entries, "metadata": metadata or {}},
              tmp_dir / MANIFEST_FILE)

    old_dir = _old_dir(directory)
    if directory.exists():
        if old_dir.exists():
            shutil.rmtree(old_dir)
        os.replace(directory, old_dir)
    os.replace(tmp_dir, directory)
    if old_dir.exists():
        shutil.rmtree(old_dir)
    digest = checkpoint_hash(directory)
    logger.info("Saved checkpoint %s (%d tensors, hash %s)", directory, len(entries), digest[:12])
    return digest


def read_manifest(directory: Union[str, Path]) -> Dict[str, Any]:
    """
    Read and validate a checkpoint manifest.

    Args:
        directory: Checkpoint directory

    Returns:
        The manifest dictionary
    """
    directory = Path(directory)
    _restore_previous(directory)
    path = directory / MANIFEST_FILE
    if not path.exists():
        raise CheckpointError(f"No checkpoint manifest at {path}")
    try:
        manifest = load_json(path)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"Corrupt checkpoint manifest {path}: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION or not isinstance(manifest.get("tensors"), list):
        raise CheckpointError(f"Unsupported checkpoint manifest {path}")
    return manifest


def load_checkpoint(directory: Union[str, Path]) -> Tuple[Dict[str, torch.Tensor], Dict[str, Any]]:
    """
    Load a checkpoint directory.

    Args:
        directory: Checkpoint directory

    Returns:
        Tuple of (float32 tensors keyed by name, metadata)
    """
    directory = Path(directory)
    manifest = read_manifest(directory)

    tensors: Dict[str, torch.Tensor] = {}
    for entry in manifest["tensors"]:
        blob = directory / entry["file"]
        if not blob.exists():
            raise CheckpointError(f"Missing tensor file {blob}")
        with open(blob, "rb") as f:
            f.seek(int(entry["offset"]))
            data = f.read(int(entry["nbytes"]))
        if len(data) != int(entry["nbytes"]):
            raise CheckpointError(f"Tensor file {blob} is truncated")
        array = np.frombuffer(data, dtype=BLOB_DTYPE).astype(np.float32)
        try:
            array = array.reshape(entry["shape"])
        except ValueError as e:
            raise CheckpointError(f"Tensor '{entry['name']}' does not match its shape {entry['shape']}") from e
        tensors[entry["name"]] = torch.from_numpy(array.copy())

    return tensors, manifest.get("metadata", {})


def checkpoint_hash(directory: Union[str, Path]) -> str:
    """
    SHA-256 over the manifest tensor entries and the tensor blobs.

    Args:
        directory: Checkpoint directory

    Returns:
        Hex digest
    """
    directory = Path(directory)
    entries = read_manifest(directory)["tensors"]
    header = json.dumps(entries, sort_keys=True).encode("utf-8")
    return hash_files([directory / entry["file"] for entry in entries], extra=header)
