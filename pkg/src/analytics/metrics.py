"""
Evaluation metrics: pairwise relative-pose AUC, depth accuracy and point error.

Angles are computed with atan2 in float64 so that exact predictions give exactly
zero error instead of acos round-off.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import torch

from src.errors import ConfigError, GeometryError
from src.geometry.camera import normalize_quaternion, quat_to_rotmat, split_encoding
from src.geometry.scene import SceneBundle, bundle_points, normalize_scene

logger = logging.getLogger(__name__)

ALIGNMENTS = ("none", "median")


@dataclass
class PoseErrorPair:
    i: int
    j: int
    rotation_deg: float
    translation_deg: float

    @property
    def error(self) -> float:
        return max(self.rotation_deg, self.translation_deg)


@dataclass
class PoseAUC:
    auc: float
    threshold: float
    num_pairs: int
    excluded_pairs: int
    pairs: List[PoseErrorPair] = field(default_factory=list)


@dataclass
class DepthMetrics:
    abs_rel: float
    delta: float
    scale: float


def _angle_between(a: torch.Tensor, b: torch.Tensor) -> float:
    return math.degrees(math.atan2(float(torch.linalg.cross(a, b).norm()), float((a * b).sum())))


def _rotation_angle(R: torch.Tensor) -> float:
    """Angle of a rotation matrix in degrees."""
    skew = torch.stack([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return math.degrees(math.atan2(float(skew.norm()) / 2.0, (float(torch.trace(R)) - 1.0) / 2.0))


def _poses(g: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    q, t, _ = split_encoding(g.detach().to(torch.float64))
    return quat_to_rotmat(normalize_quaternion(q), check=False), t


def relative_pose_errors(pred: torch.Tensor, gt: torch.Tensor) -> Tuple[List[PoseErrorPair], int]:
    """Rotation and translation-direction errors of every unordered frame pair.

    Pairs whose ground-truth baseline is zero have no translation direction and
    are excluded; their count is returned alongside the errors.
    """
    if pred.shape != gt.shape or pred.dim() != 2 or pred.shape[0] < 2:
        raise GeometryError(f"pose AUC needs at least two matching cameras, got {tuple(pred.shape)} and {tuple(gt.shape)}")
    R_pred, t_pred = _poses(pred)
    R_gt, t_gt = _poses(gt)

    pairs, excluded = [], 0
    n = pred.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            rel_pred = R_pred[j] @ R_pred[i].T
            rel_gt = R_gt[j] @ R_gt[i].T
            trans_gt = t_gt[j] - rel_gt @ t_gt[i]
            if float(trans_gt.norm()) <= 1e-12:
                excluded += 1
                continue
            trans_pred = t_pred[j] - rel_pred @ t_pred[i]
            rotation = _rotation_angle(rel_pred @ rel_gt.T)
            translation = 180.0 if float(trans_pred.norm()) <= 1e-12 else _angle_between(trans_pred, trans_gt)
            pairs.append(PoseErrorPair(i, j, rotation, translation))
    return pairs, excluded


def auc_from_errors(errors: Sequence[float], threshold: float) -> float:
    """(100 / tau) * integral over [0, tau] of the fraction of errors below t.

    The accuracy curve is a step function, so the integral is exactly
    sum(max(0, tau - e)) / M.
    """
    if not errors:
        return 0.0
    area = sum(max(0.0, threshold - e) for e in errors)
    return 100.0 * area / (threshold * len(errors))


def pose_auc(pred: torch.Tensor, gt: torch.Tensor, threshold: float = 3.0) -> PoseAUC:
    pairs, excluded = relative_pose_errors(pred, gt)
    if excluded:
        logger.warning(f"Excluded {excluded} frame pairs with zero ground-truth baseline")
    return PoseAUC(
        auc=auc_from_errors([p.error for p in pairs], threshold),
        threshold=threshold,
        num_pairs=len(pairs),
        excluded_pairs=excluded,
        pairs=pairs,
    )


def depth_metrics(pred: torch.Tensor, gt: torch.Tensor, valid: torch.Tensor,
                  alignment: str = "median") -> DepthMetrics:
    """AbsRel and delta < 1.25 (in percent) over valid pixels of a sequence."""
    if alignment not in ALIGNMENTS:
        raise ConfigError(f"unknown depth alignment {alignment!r}, expected one of {ALIGNMENTS}")
    pred = pred.detach().to(torch.float64)
    gt = gt.detach().to(torch.float64)
    mask = valid & torch.isfinite(gt) & (gt > 0) & (pred > 0)
    if not bool(mask.any()):
        raise GeometryError("no valid pixels for depth metrics")
    d_pred, d_gt = pred[mask], gt[mask]

    scale = float(torch.quantile(d_gt / d_pred, 0.5)) if alignment == "median" else 1.0
    aligned = scale * d_pred
    abs_rel = float(((aligned - d_gt).abs() / d_gt).mean())
    ratio = torch.maximum(aligned / d_gt, d_gt / aligned)
    delta = 100.0 * float((ratio < 1.25).double().mean())
    return DepthMetrics(abs_rel=abs_rel, delta=delta, scale=scale)


def point_distance(pred_points: torch.Tensor, gt_points: torch.Tensor, valid: torch.Tensor) -> float:
    """Mean l2 distance between corresponding points over valid pixels."""
    if not bool(valid.any()):
        raise GeometryError("no valid pixels for point error")
    distances = (pred_points.to(torch.float64) - gt_points.to(torch.float64)).norm(dim=-1)
    return float(distances[valid].mean())


def point_error(pred_depth: torch.Tensor, pred_cameras: torch.Tensor, gt: SceneBundle) -> float:
    """Point error in unit space.

    Predictions are normalized with the same rule as ground truth (reference
    frame of camera 0, unit mean point distance over the ground-truth valid mask).
    """
    q, t, f = split_encoding(pred_cameras.detach().to(torch.float64))
    predicted = SceneBundle(
        images=gt.images,
        cameras=torch.cat([normalize_quaternion(q), t, f], dim=-1),
        depths=pred_depth.detach().to(torch.float64),
        valid=gt.valid,
    )
    predicted = normalize_scene(predicted)
    reference = normalize_scene(gt.to(torch.float64))
    return point_distance(bundle_points(predicted), bundle_points(reference), gt.valid)
