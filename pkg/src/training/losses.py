"""
Supervised multi-task losses.

All terms expect ground truth already normalized to unit space. Confidence c
is shared between the depth and point terms; the norms are means of absolute
values over valid pixels (resolution independent), summed over frames.
"""

from dataclasses import dataclass
from typing import Dict, Optional

import torch
import torch.nn.functional as F

from src.config.experiment import LossWeights
from src.errors import LossError, ShapeError
from src.geometry.camera import canonicalize_encoding, normalize_quaternion, unproject_depth
from src.training.pairs import PatchPairSet

DEPTH_FLOOR = 1e-6


@dataclass
class MatchResult:
    loss: torch.Tensor
    skipped: bool
    num_positives: int = 0
    num_negatives: int = 0


@dataclass
class LossBreakdown:
    total: torch.Tensor
    camera: torch.Tensor
    depth: torch.Tensor
    point: torch.Tensor
    match: torch.Tensor
    match_skipped: bool = False

    def to_dict(self) -> Dict[str, float]:
        return {
            "total": float(self.total),
            "camera": float(self.camera),
            "depth": float(self.depth),
            "point": float(self.point),
            "match": float(self.match),
            "match_skipped": self.match_skipped,
        }


def camera_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Sum over frames of the l1 distance between (N, 9) encodings, quaternions canonicalized."""
    if pred.shape != gt.shape:
        raise ShapeError(f"camera shapes differ: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    return (canonicalize_encoding(pred) - canonicalize_encoding(gt)).abs().sum()


def _masked_mean(values: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    count = mask.sum()
    if int(count) == 0:
        return values.new_zeros(())
    return torch.where(mask, values, torch.zeros_like(values)).sum() / count


def _uncertainty_loss(error: torch.Tensor, confidence: torch.Tensor, gt_depth: torch.Tensor,
                      valid: torch.Tensor, alpha: float) -> torch.Tensor:
    """Shared body of the depth and point terms.

    Args:
        error: (N, H, W, K) residuals, zero where invalid.
        confidence: (N, H, W) positive confidences.
        gt_depth: (N, H, W) ground-truth depths for the (1 + 1/D) weight.
        valid: (N, H, W) mask.
        alpha: Weight of the -log c regularizer.
    """
    if not bool(valid.any()):
        raise LossError("no valid pixels in any frame")

    safe_depth = torch.where(valid, gt_depth, torch.ones_like(gt_depth)).clamp_min(DEPTH_FLOOR)
    weight = 1.0 + 1.0 / safe_depth
    c = confidence

    total = error.new_zeros(())
    for i in range(error.shape[0]):
        v, e, ci = valid[i], error[i], c[i]
        if not bool(v.any()):
            continue
        residual = (ci * weight[i])[..., None] * e
        total = total + _masked_mean(residual.abs().sum(-1), v)

        dx = e[:, 1:] - e[:, :-1]
        vx = v[:, 1:] & v[:, :-1]
        total = total + _masked_mean((ci[:, :-1, None] * dx).abs().sum(-1), vx)

        dy = e[1:] - e[:-1]
        vy = v[1:] & v[:-1]
        total = total + _masked_mean((ci[:-1, :, None] * dy).abs().sum(-1), vy)

        total = total - alpha * _masked_mean(torch.log(ci), v)
    return total


def depth_loss(pred_depth: torch.Tensor, confidence: torch.Tensor, gt_depth: torch.Tensor,
               valid: torch.Tensor, alpha: float) -> torch.Tensor:
    """Confidence-weighted depth loss with gradient consistency.

    Raises:
        LossError: if no pixel is valid.
    """
    if pred_depth.shape != gt_depth.shape or confidence.shape != gt_depth.shape:
        raise ShapeError("depth prediction, confidence and ground truth must share a shape")
    safe_gt = torch.where(valid, gt_depth, pred_depth.detach())
    error = torch.where(valid, pred_depth - safe_gt, torch.zeros_like(pred_depth))
    return _uncertainty_loss(error[..., None], confidence, gt_depth, valid, alpha)


def point_loss(pred_depth: torch.Tensor, confidence: torch.Tensor, pred_cameras: torch.Tensor,
               gt_points: torch.Tensor, gt_depth: torch.Tensor, valid: torch.Tensor,
               alpha: float) -> torch.Tensor:
    """Depth-loss structure on 3-D residuals of points unprojected with the predicted cameras."""
    q = normalize_quaternion(pred_cameras[:, :4])
    cameras = torch.cat([q, pred_cameras[:, 4:]], dim=-1)
    points = unproject_depth(pred_depth, cameras, check=False)
    safe_gt = torch.where(valid[..., None], gt_points, points.detach())
    error = torch.where(valid[..., None], points - safe_gt, torch.zeros_like(points))
    return _uncertainty_loss(error, confidence, gt_depth, valid, alpha)


def pair_bce(positive_scores: torch.Tensor, negative_scores: torch.Tensor) -> torch.Tensor:
    """Mean -log sigmoid(s) over positives plus mean -log(1 - sigmoid(s)) over negatives."""
    loss = positive_scores.new_zeros(())
    if positive_scores.numel():
        loss = loss + F.softplus(-positive_scores).mean()
    if negative_scores.numel():
        loss = loss + F.softplus(negative_scores).mean()
    return loss


def matching_loss(image_tokens: torch.Tensor, pairs: PatchPairSet) -> MatchResult:
    """Binary cross-entropy on cosine similarities of (N, P, C) image tokens.

    An empty pair set returns a zero loss with `skipped` set.
    """
    if pairs.empty:
        return MatchResult(loss=image_tokens.new_zeros(()), skipped=True)
    tokens = F.normalize(image_tokens, dim=-1)

    def similarity(index: torch.Tensor) -> torch.Tensor:
        if index.numel() == 0:
            return tokens.new_zeros(0)
        a = tokens[index[:, 0], index[:, 1]]
        b = tokens[index[:, 2], index[:, 3]]
        return (a * b).sum(-1)

    positives = similarity(pairs.positive_index())
    negatives = similarity(pairs.negative_index())
    return MatchResult(
        loss=pair_bce(positives, negatives),
        skipped=False,
        num_positives=positives.numel(),
        num_negatives=negatives.numel(),
    )


def total_loss(camera: torch.Tensor, depth: torch.Tensor, point: torch.Tensor,
               match: torch.Tensor, weights: LossWeights, match_skipped: bool = False) -> LossBreakdown:
    total = (
        weights.camera * camera
        + weights.depth * depth
        + weights.point * point
        + weights.match * match
    )
    return LossBreakdown(total=total, camera=camera, depth=depth, point=point, match=match,
                         match_skipped=match_skipped)


def supervised_losses(output, gt_cameras: torch.Tensor, gt_depth: torch.Tensor, gt_points: torch.Tensor,
                      valid: torch.Tensor, weights: LossWeights,
                      pairs: Optional[PatchPairSet] = None) -> LossBreakdown:
    """All four terms for a model output against a normalized ground-truth bundle."""
    camera = camera_loss(output.camera.encoding, gt_cameras)
    depth = depth_loss(output.depth.depth, output.depth.confidence, gt_depth, valid, weights.alpha)
    point = point_loss(output.depth.depth, output.depth.confidence, output.camera.encoding,
                       gt_points, gt_depth, valid, weights.alpha)
    if pairs is None:
        match = MatchResult(loss=camera.new_zeros(()), skipped=True)
    else:
        match = matching_loss(output.state.image_tokens, pairs)
    return total_loss(camera, depth, point, match.loss, weights, match_skipped=match.skipped)

