"""
Model checkpoints in the blob container format.

    <dir>/manifest.json   {"format", "step", "config", "parameters": {name: blob}}
    <dir>/<name>.f32      one blob per state-dict entry
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import torch
from torch import nn

from src.errors import BundleFormatError
from src.storage.blobs import PathLike, read_blob, read_manifest, write_blob, write_manifest

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "checkpoint/1"


def save_checkpoint(model: nn.Module, directory: PathLike, step: int,
                    config: Optional[Dict[str, Any]] = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    parameters = {
        name: write_blob(directory, f"{name}.f32", tensor)
        for name, tensor in model.state_dict().items()
    }
    path = write_manifest(directory, {
        "format": CHECKPOINT_FORMAT,
        "step": int(step),
        "config": config,
        "parameters": parameters,
    })
    logger.info(f"Checkpoint at step {step} written to {directory}")
    return path


def read_checkpoint(directory: PathLike) -> Tuple[Dict[str, torch.Tensor], Dict[str, Any]]:
    """Return (state dict, manifest) of a checkpoint directory."""
    manifest = read_manifest(directory)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise BundleFormatError(f"{directory}: not a checkpoint (format {manifest.get('format')!r})")
    state = {name: read_blob(directory, entry) for name, entry in manifest.get("parameters", {}).items()}
    return state, manifest


def load_checkpoint(model: nn.Module, directory: PathLike) -> Dict[str, Any]:
    """Load parameters into `model` in place and return the manifest.

    Raises:
        BundleFormatError: if parameter names or shapes do not match the model.
    """
    state, manifest = read_checkpoint(directory)
    expected = model.state_dict()
    missing = sorted(set(expected) - set(state))
    unexpected = sorted(set(state) - set(expected))
    if missing or unexpected:
        raise BundleFormatError(f"{directory}: missing {missing}, unexpected {unexpected}")
    for name, tensor in state.items():
        if tuple(tensor.shape) != tuple(expected[name].shape):
            raise BundleFormatError(
                f"{directory}: {name} has shape {tuple(tensor.shape)}, model expects {tuple(expected[name].shape)}"
            )
    model.load_state_dict({name: tensor.to(expected[name].dtype) for name, tensor in state.items()})
    logger.info(f"Loaded checkpoint from {directory} (step {manifest.get('step')})")
    return manifest
