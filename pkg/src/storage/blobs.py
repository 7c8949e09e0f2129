"""
Blob container shared by scene bundles, prediction bundles and checkpoints.

A container is a directory with a `manifest.json` (sorted keys, two-space
indent) and one raw little-endian row-major file per tensor. Entries in the
manifest describe a blob as {"file": ..., "shape": [...], "dtype": "f32"|"u8"}.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import torch

from src.errors import BundleFormatError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"

# on-disk dtype tag -> (numpy dtype, torch dtype)
DTYPES = {
    "f32": (np.dtype("<f4"), torch.float32),
    "u8": (np.dtype("u1"), torch.bool),
}

PathLike = Union[str, Path]


def write_manifest(directory: PathLike, manifest: Dict[str, Any]) -> Path:
    path = Path(directory) / MANIFEST_NAME
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_manifest(directory: PathLike) -> Dict[str, Any]:
    path = Path(directory) / MANIFEST_NAME
    if not path.is_file():
        raise BundleFormatError(f"{directory}: missing {MANIFEST_NAME}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise BundleFormatError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(manifest, dict):
        raise BundleFormatError(f"{path}: manifest must be a JSON object")
    return manifest


def write_blob(directory: PathLike, filename: str, tensor: torch.Tensor, dtype: str = "f32") -> Dict[str, Any]:
    """Write one tensor and return its manifest entry.

    Boolean masks are stored as u8 (0/1); everything else as little-endian f32.
    """
    np_dtype, _ = DTYPES[dtype]
    array = tensor.detach().cpu()
    array = array.to(torch.uint8) if dtype == "u8" else array.to(torch.float32)
    data = np.ascontiguousarray(array.numpy().astype(np_dtype, copy=False))
    (Path(directory) / filename).write_bytes(data.tobytes(order="C"))
    return {"file": filename, "shape": list(tensor.shape), "dtype": dtype}


def read_blob(directory: PathLike, entry: Dict[str, Any]) -> torch.Tensor:
    """Read a blob described by a manifest entry."""
    try:
        filename, shape, dtype = entry["file"], tuple(entry["shape"]), entry["dtype"]
    except (KeyError, TypeError) as e:
        raise BundleFormatError(f"malformed blob entry {entry!r}") from e
    if dtype not in DTYPES:
        raise BundleFormatError(f"{filename}: unknown dtype {dtype!r}")

    path = Path(directory) / filename
    if not path.is_file():
        raise BundleFormatError(f"{directory}: missing blob {filename}")

    np_dtype, torch_dtype = DTYPES[dtype]
    raw = path.read_bytes()
    expected = int(np.prod(shape, dtype=np.int64)) * np_dtype.itemsize
    if len(raw) != expected:
        raise BundleFormatError(f"{filename}: expected {expected} bytes for shape {list(shape)}, found {len(raw)}")

    array = np.frombuffer(raw, dtype=np_dtype).reshape(shape)
    tensor = torch.from_numpy(array.astype(array.dtype.newbyteorder("="), copy=True))
    if torch_dtype is torch.bool:
        return tensor != 0
    return tensor
