"""
Positive and negative patch pairs for the matching loss.

Positives come from geometry: query pixels are unprojected with ground-truth
depth, projected into the other frames and kept when they land inside the
image (away from a border) on a pixel with consistent depth. Negatives are
random patch pairs that are both epipolar-inconsistent and different in mean
colour, since failing the positive test alone does not make a pair negative.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

import torch
import torch.nn.functional as F

from src.config.experiment import PairConfig
from src.errors import DegenerateGeometryError, LossError, ShapeError
from src.geometry.camera import (
    Camera,
    fundamental_matrix,
    normalize_quaternion,
    project_points,
    sampson_from_fundamental,
    unproject_depth,
)
from src.geometry.scene import SceneBundle

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PatchPair:
    frame_a: int
    patch_a: int
    frame_b: int
    patch_b: int
    overlap: float


@dataclass(frozen=True)
class NegativePair:
    frame_a: int
    patch_a: int
    frame_b: int
    patch_b: int
    sampson: float
    rgb_distance: float


@dataclass
class PatchPairSet:
    positives: List[PatchPair] = field(default_factory=list)
    negatives: List[NegativePair] = field(default_factory=list)
    query_patches: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        """No positive pair: the matching loss is skipped."""
        return not self.positives

    def positive_keys(self) -> Set[Tuple[int, int, int, int]]:
        return {(p.frame_a, p.patch_a, p.frame_b, p.patch_b) for p in self.positives}

    def positive_index(self) -> torch.Tensor:
        return torch.tensor(
            [[p.frame_a, p.patch_a, p.frame_b, p.patch_b] for p in self.positives], dtype=torch.long
        ).reshape(-1, 4)

    def negative_index(self) -> torch.Tensor:
        return torch.tensor(
            [[p.frame_a, p.patch_a, p.frame_b, p.patch_b] for p in self.negatives], dtype=torch.long
        ).reshape(-1, 4)


def patch_centers(grid_h: int, grid_w: int, patch_size: int, dtype=torch.float64) -> torch.Tensor:
    """(P, 2) pixel coordinates of patch centers in row-major patch order."""
    j = torch.arange(grid_h * grid_w)
    offset = (patch_size - 1) / 2.0
    u = (j % grid_w) * patch_size + offset
    v = (j // grid_w) * patch_size + offset
    return torch.stack([u, v], dim=-1).to(dtype)


def _projection_counts(bundle: SceneBundle, cameras: torch.Tensor, patch_size: int, config: PairConfig,
                       generator: Optional[torch.Generator]) -> Dict[Tuple[int, int], torch.Tensor]:
    """(P, P) hit counts per ordered frame pair: [query patch, target patch]."""
    n, h, w = bundle.num_frames, bundle.height, bundle.width
    grid_w = w // patch_size
    num_patches = (h // patch_size) * grid_w
    usable = bundle.static_valid()
    depths = torch.where(bundle.valid, bundle.depths.double(), torch.zeros_like(bundle.depths, dtype=torch.float64))
    points = unproject_depth(depths, cameras)
    border = config.border

    counts = {}
    for a in range(n):
        ys, xs = torch.nonzero(usable[a], as_tuple=True)
        cap = config.pixels_per_frame
        if cap is not None and ys.numel() > cap:
            keep = torch.randperm(ys.numel(), generator=generator)[:cap].sort().values
            ys, xs = ys[keep], xs[keep]
        if ys.numel() == 0:
            continue
        query_patch = (ys // patch_size) * grid_w + xs // patch_size
        query_points = points[a, ys, xs]

        for b in range(n):
            if b == a:
                continue
            uv, z, _ = project_points(query_points[None], cameras[b:b + 1], w, h)
            z = z[0]
            u = torch.round(uv[0, :, 0])
            v = torch.round(uv[0, :, 1])
            inside = (z > 0) & (u >= border) & (u < w - border) & (v >= border) & (v < h - border)
            ui = u.clamp(0, w - 1).long()
            vi = v.clamp(0, h - 1).long()
            target_depth = depths[b, vi, ui]
            consistent = (z - target_depth).abs() <= config.depth_tolerance * target_depth
            hit = inside & usable[b, vi, ui] & consistent
            if not bool(hit.any()):
                continue
            target_patch = (vi // patch_size) * grid_w + ui // patch_size
            flat = query_patch[hit] * num_patches + target_patch[hit]
            counts[(a, b)] = torch.bincount(flat, minlength=num_patches * num_patches).reshape(
                num_patches, num_patches
            )
    return counts


def _negatives(bundle: SceneBundle, cameras: torch.Tensor, patch_size: int, config: PairConfig,
               wanted: int, exclude: Set[Tuple[int, int, int, int]],
               generator: Optional[torch.Generator]) -> List[NegativePair]:
    n, h, w = bundle.num_frames, bundle.height, bundle.width
    grid_h, grid_w = h // patch_size, w // patch_size
    num_patches = grid_h * grid_w
    if wanted <= 0:
        return []

    fundamentals = torch.full((n, n, 3, 3), float("nan"), dtype=torch.float64)
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            try:
                fundamentals[a, b] = fundamental_matrix(
                    Camera.from_vector(cameras[a], w, h), Camera.from_vector(cameras[b], w, h)
                )
            except DegenerateGeometryError:
                logger.debug(f"Frames {a} and {b} share a camera center; no negatives between them")

    mean_rgb = F.avg_pool2d(bundle.images.double(), patch_size).flatten(2).transpose(1, 2)
    centers = patch_centers(grid_h, grid_w, patch_size)

    trials = config.max_negative_trials
    frame_a = torch.randint(0, n, (trials,), generator=generator)
    frame_b = (frame_a + torch.randint(1, n, (trials,), generator=generator)) % n
    patch_a = torch.randint(0, num_patches, (trials,), generator=generator)
    patch_b = torch.randint(0, num_patches, (trials,), generator=generator)

    sampson = sampson_from_fundamental(fundamentals[frame_a, frame_b], centers[patch_a], centers[patch_b])
    rgb = (mean_rgb[frame_a, patch_a] - mean_rgb[frame_b, patch_b]).norm(dim=-1)
    passing = (sampson > config.sampson_threshold) & (rgb > config.rgb_threshold)

    negatives, seen = [], set()
    for k in torch.nonzero(passing).flatten().tolist():
        key = (int(frame_a[k]), int(patch_a[k]), int(frame_b[k]), int(patch_b[k]))
        if key in exclude or key in seen:
            continue
        seen.add(key)
        negatives.append(NegativePair(*key, sampson=float(sampson[k]), rgb_distance=float(rgb[k])))
        if len(negatives) == wanted:
            break
    return negatives


def build_pairs(bundle: SceneBundle, patch_size: int, config: Optional[PairConfig] = None,
                generator: Optional[torch.Generator] = None) -> PatchPairSet:
    """Positive/negative patch pairs of a labeled, normalized bundle.

    Args:
        bundle: Ground-truth bundle; dynamic pixels never seed or receive positives.
        patch_size: Patch size r of the tokenizer.
        config: Pair constants; defaults to PairConfig().
        generator: Source of all sampling randomness.

    Returns:
        PatchPairSet; `empty` is set when no positive exists.
    """
    config = config or PairConfig()
    if not bundle.is_labeled:
        raise LossError("pair construction needs ground-truth cameras and depths")
    if bundle.height % patch_size or bundle.width % patch_size:
        raise ShapeError(f"image {bundle.height}x{bundle.width} not divisible by patch size {patch_size}")
    if bundle.num_frames < 2:
        return PatchPairSet()

    raw = bundle.cameras.double()
    cameras = torch.cat([normalize_quaternion(raw[:, :4]), raw[:, 4:]], dim=-1)
    counts = _projection_counts(bundle, cameras, patch_size, config, generator)
    num_patches = (bundle.height // patch_size) * (bundle.width // patch_size)

    totals = torch.zeros(bundle.num_frames, num_patches, dtype=torch.long)
    for (a, _), hits in counts.items():
        totals[a] += hits.sum(dim=1)

    candidates = torch.nonzero(totals >= config.min_projections)
    if candidates.shape[0] > config.max_query_patches:
        weights = totals[candidates[:, 0], candidates[:, 1]].double()
        chosen = torch.multinomial(weights, config.max_query_patches, replacement=False, generator=generator)
        candidates = candidates[chosen.sort().values]
    query_patches = [(int(a), int(p)) for a, p in candidates.tolist()]

    positives = []
    for a, pa in query_patches:
        for b in range(bundle.num_frames):
            hits = counts.get((a, b))
            if hits is None:
                continue
            row = hits[pa]
            denominator = int(row.sum())
            if denominator == 0:
                continue
            overlap = row.double() / denominator
            for pb in torch.nonzero(overlap > config.min_overlap).flatten().tolist():
                positives.append(PatchPair(a, pa, b, pb, float(overlap[pb])))

    negatives = _negatives(bundle, cameras, patch_size, config, len(positives),
                           {(p.frame_a, p.patch_a, p.frame_b, p.patch_b) for p in positives}, generator)

    if config.balance:
        size = min(len(positives), len(negatives))
        if size < len(positives):
            keep = torch.randperm(len(positives), generator=generator)[:size].sort().values
            positives = [positives[k] for k in keep.tolist()]
        negatives = negatives[:size]

    logger.debug(
        f"Pairs for '{bundle.name}': {len(query_patches)} query patches, "
        f"{len(positives)} positives, {len(negatives)} negatives"
    )
    return PatchPairSet(positives=positives, negatives=negatives, query_patches=query_patches)
