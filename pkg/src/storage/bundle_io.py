"""
SceneBundle directory format.

    <dir>/manifest.json
    <dir>/images.f32           (N, 3, H, W)
    <dir>/depth_<i>.f32        (H, W) per frame
    <dir>/valid_<i>.u8         (H, W) per frame
    <dir>/dynamic_<i>.u8       optional
    <dir>/confidence_<i>.f32   optional, prediction bundles only

Cameras are stored inline in the manifest as lists of nine floats (or null for
unlabeled bundles). Writing then reading a float32 bundle is bit-exact.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import torch

from src.errors import BundleFormatError, ShapeError
from src.geometry.scene import SceneBundle
from src.storage.blobs import PathLike, read_blob, read_manifest, write_blob, write_manifest

logger = logging.getLogger(__name__)

BUNDLE_FORMAT = "scene-bundle/1"
PER_FRAME = (("depths", "depth", "f32"), ("valid", "valid", "u8"),
             ("dynamic", "dynamic", "u8"), ("confidence", "confidence", "f32"))


def save_bundle(bundle: SceneBundle, directory: PathLike) -> Path:
    """Write a bundle to `directory` (created if needed) and return the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    manifest: Dict[str, Any] = {
        "format": BUNDLE_FORMAT,
        "name": bundle.name,
        "num_frames": bundle.num_frames,
        "height": bundle.height,
        "width": bundle.width,
        "reference_index": bundle.reference_index,
        "images": write_blob(directory, "images.f32", bundle.images),
        "cameras": None,
        "metadata": bundle.metadata,
    }
    if bundle.cameras is not None:
        cameras = bundle.cameras.detach().cpu().to(torch.float32)
        manifest["cameras"] = [[float(x) for x in row] for row in cameras.tolist()]

    for attr, stem, dtype in PER_FRAME:
        value = getattr(bundle, attr)
        if value is None:
            manifest[attr] = None
            continue
        manifest[attr] = [
            write_blob(directory, f"{stem}_{i}.{dtype}", value[i], dtype)
            for i in range(bundle.num_frames)
        ]

    path = write_manifest(directory, manifest)
    logger.debug(f"Saved bundle '{bundle.name}' ({bundle.num_frames} frames) to {directory}")
    return path


def _read_frames(directory: Path, entries: Optional[List[Dict[str, Any]]], num_frames: int,
                 label: str) -> Optional[torch.Tensor]:
    if entries is None:
        return None
    if not isinstance(entries, list) or len(entries) != num_frames:
        raise BundleFormatError(f"{directory}: '{label}' must list one blob per frame")
    return torch.stack([read_blob(directory, entry) for entry in entries])


def load_bundle(directory: PathLike) -> SceneBundle:
    """Read a bundle written by save_bundle.

    Raises:
        BundleFormatError: on a missing or inconsistent manifest or blob.
    """
    directory = Path(directory)
    manifest = read_manifest(directory)
    if manifest.get("format") != BUNDLE_FORMAT:
        raise BundleFormatError(f"{directory}: unsupported format {manifest.get('format')!r}")

    try:
        num_frames = int(manifest["num_frames"])
        images = read_blob(directory, manifest["images"])
    except KeyError as e:
        raise BundleFormatError(f"{directory}: manifest lacks {e}") from e

    cameras = manifest.get("cameras")
    if cameras is not None:
        cameras = torch.tensor(cameras, dtype=torch.float32)

    frames = {
        attr: _read_frames(directory, manifest.get(attr), num_frames, attr)
        for attr, _, _ in PER_FRAME
    }
    try:
        return SceneBundle(
            images=images,
            cameras=cameras,
            name=manifest.get("name", directory.name),
            metadata=manifest.get("metadata") or {},
            reference_index=int(manifest.get("reference_index", 0)),
            **frames,
        )
    except ShapeError as e:
        raise BundleFormatError(f"{directory}: {e}") from e


def list_bundles(root: PathLike) -> List[Path]:
    """Bundle directories under `root` (the root itself if it is a bundle), sorted by name."""
    root = Path(root)
    if (root / "manifest.json").is_file():
        return [root]
    if not root.is_dir():
        raise BundleFormatError(f"{root}: not a directory")
    return sorted(p for p in root.iterdir() if (p / "manifest.json").is_file())
