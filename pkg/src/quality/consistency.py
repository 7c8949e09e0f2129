"""
Multi-view depth consistency.

A pixel is consistent when its unprojected point, reprojected into at least one
other view, lands (nearest pixel) on a valid depth within a relative tolerance.
"""

import logging
from dataclasses import dataclass

import torch

from src.errors import QualityError
from src.geometry.camera import normalize_quaternion, project_points, unproject_depth
from src.geometry.scene import SceneBundle

logger = logging.getLogger(__name__)


@dataclass
class ConsistencyResult:
    """Per-pixel consistency masks and summary fractions.

    valid_fraction is taken over covisible pixels (those landing on a valid
    pixel of some other view); pixel_fraction over every pixel of the sequence.
    """

    masks: torch.Tensor
    covisible: torch.Tensor
    valid_fraction: float
    pixel_fraction: float


def multi_view_consistency(bundle: SceneBundle, tolerance: float = 0.01) -> ConsistencyResult:
    if bundle.num_frames < 2:
        raise QualityError("multi-view consistency needs at least two frames")
    if not bundle.is_labeled:
        raise QualityError("multi-view consistency needs cameras and depths")

    n, h, w = bundle.num_frames, bundle.height, bundle.width
    g = bundle.cameras.detach().to(torch.float64)
    g = torch.cat([normalize_quaternion(g[:, :4]), g[:, 4:]], dim=-1)
    valid = bundle.valid
    depths = torch.where(valid, bundle.depths.to(torch.float64), torch.zeros((), dtype=torch.float64))
    points = unproject_depth(depths, g)

    masks = torch.zeros(n, h, w, dtype=torch.bool)
    covisible = torch.zeros(n, h, w, dtype=torch.bool)
    for a in range(n):
        source = points[a].reshape(1, -1, 3)
        for b in range(n):
            if b == a:
                continue
            uv, z, _ = project_points(source, g[b:b + 1], w, h)
            u = torch.round(uv[0, :, 0])
            v = torch.round(uv[0, :, 1])
            z = z[0]
            inside = (z > 0) & (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
            ui = u.clamp(0, w - 1).long()
            vi = v.clamp(0, h - 1).long()
            target = depths[b, vi, ui]
            lands = inside & valid[b, vi, ui] & valid[a].reshape(-1)
            agrees = lands & ((z - target).abs() <= tolerance * target)
            covisible[a] |= lands.reshape(h, w)
            masks[a] |= agrees.reshape(h, w)

    num_covisible = int(covisible.sum())
    valid_fraction = float(masks.sum()) / num_covisible if num_covisible else 0.0
    pixel_fraction = float(masks.sum()) / masks.numel()
    logger.debug(f"Consistency of '{bundle.name}': {valid_fraction:.3f} of covisible, {pixel_fraction:.3f} of all pixels")
    return ConsistencyResult(masks=masks, covisible=covisible, valid_fraction=valid_fraction,
                             pixel_fraction=pixel_fraction)
