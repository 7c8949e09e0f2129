"""
Geometric sequence-quality features.

Each function takes plain tensors and returns Python floats. Point clouds are
(M, 3), cameras (N, 9) in the usual (q, t, f) encoding.
"""

import logging
from typing import Optional, Tuple

import numpy as np
import torch
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from src.errors import QualityError
from src.geometry.camera import (
    camera_centers,
    fov_degrees,
    normalize_quaternion,
    project_points,
    quat_to_rotmat,
)

logger = logging.getLogger(__name__)


def _as_numpy(x) -> np.ndarray:
    if isinstance(x, torch.Tensor):
        return x.detach().cpu().to(torch.float64).numpy()
    return np.asarray(x, dtype=np.float64)


def _unit_cameras(cameras: torch.Tensor) -> torch.Tensor:
    g = cameras.detach().to(torch.float64)
    return torch.cat([normalize_quaternion(g[:, :4]), g[:, 4:]], dim=-1)


def second_difference_energy(values: np.ndarray) -> float:
    """Mean squared norm of x[i+1] - 2 x[i] + x[i-1]."""
    accel = values[2:] - 2.0 * values[1:-1] + values[:-2]
    return float((accel ** 2).sum(axis=1).mean())


def trajectory_smoothness(cameras: torch.Tensor) -> Tuple[float, float]:
    """(s_trans, s_rot): acceleration energy of camera centers and of rotation vectors.

    Rotations are taken relative to the first camera, so both terms are
    unchanged by a rigid motion of the whole trajectory.
    """
    if cameras.shape[0] < 3:
        raise QualityError(f"smoothness needs at least 3 cameras, got {cameras.shape[0]}")
    g = _unit_cameras(cameras)
    centers = _as_numpy(camera_centers(g))
    q = _as_numpy(g[:, :4])
    # scipy quaternions are scalar-last
    rotations = Rotation.from_quat(q[:, [1, 2, 3, 0]])
    rotvecs = (rotations * rotations[0].inv()).as_rotvec()
    return second_difference_energy(centers), second_difference_energy(rotvecs)


def parallax_stat(points: torch.Tensor, cameras: torch.Tensor, width: int, height: int,
                  sample_size: int = 256, seed: int = 0) -> float:
    """Median over sampled points of the largest angle any two observing cameras subtend.

    A camera observes a point when it lies in its frustum with positive depth.

    Raises:
        QualityError: if no sampled point is observed by two cameras.
    """
    if cameras.shape[0] < 2 or points.shape[0] < 1:
        raise QualityError("parallax needs at least two cameras and one point")
    points = points.detach().to(torch.float64)
    if points.shape[0] > sample_size:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(points.shape[0], size=sample_size, replace=False))
        points = points[torch.from_numpy(keep)]

    g = _unit_cameras(cameras)
    n = g.shape[0]
    _, _, visible = project_points(points[None].expand(n, -1, -1), g, width, height)
    centers = camera_centers(g)

    rays = centers[:, None, :] - points[None, :, :]
    rays = rays / rays.norm(dim=-1, keepdim=True).clamp_min(1e-300)
    best = []
    for m in range(points.shape[0]):
        seen = torch.nonzero(visible[:, m]).flatten()
        if seen.numel() < 2:
            continue
        r = rays[seen, m]
        cross = torch.linalg.cross(r[:, None, :].expand(-1, len(seen), -1), r[None, :, :].expand(len(seen), -1, -1))
        angles = torch.atan2(cross.norm(dim=-1), (r @ r.T))
        best.append(float(torch.rad2deg(angles.max())))
    if not best:
        raise QualityError("no point is visible in two cameras")
    return float(np.median(best))


def pca_shape(points: torch.Tensor) -> Tuple[float, float, float]:
    """(linearity, planarity, scattering) from covariance eigenvalues v1 >= v2 >= v3."""
    p = _as_numpy(points)
    if p.shape[0] < 4:
        raise QualityError(f"shape descriptor needs at least 4 points, got {p.shape[0]}")
    centered = p - p.mean(axis=0)
    cov = centered.T @ centered / p.shape[0]
    v3, v2, v1 = np.clip(np.linalg.eigvalsh(cov), 0.0, None)
    if v1 <= 0.0:
        raise QualityError("all points coincide")
    return float((v1 - v2) / v1), float((v2 - v3) / v1), float(v3 / v1)


def completeness(depths: torch.Tensor, valid: Optional[torch.Tensor] = None) -> float:
    """Fraction of pixels, over all frames, holding a valid finite positive depth."""
    ok = torch.isfinite(depths) & (depths > 0)
    if valid is not None:
        ok = ok & valid
    return float(ok.double().mean())


def noise_fraction(points: torch.Tensor, k: int = 8) -> float:
    """Fraction of points whose mean distance to their k nearest neighbours exceeds mean + 2 std."""
    p = _as_numpy(points)
    if p.shape[0] < k + 1:
        raise QualityError(f"noise estimate needs at least {k + 1} points, got {p.shape[0]}")
    distances, _ = cKDTree(p).query(p, k=k + 1)
    mean_knn = distances[:, 1:].mean(axis=1)
    mu, sigma = mean_knn.mean(), mean_knn.std()
    # relative slack for round-off
    threshold = mu + 2.0 * sigma + 1e-9 * mu
    return float((mean_knn > threshold).mean())


def registration_ratio(cameras: Optional[torch.Tensor], num_frames: int) -> float:
    """Fraction of frames with a finite camera and positive focal lengths."""
    if cameras is None or num_frames == 0:
        return 0.0
    g = cameras.detach()
    ok = torch.isfinite(g).all(dim=-1) & (g[:, 7:9] > 0).all(dim=-1)
    return float(ok.sum()) / num_frames


def field_of_view(cameras: torch.Tensor) -> Tuple[float, float]:
    """Median horizontal and vertical field of view in degrees."""
    fov = fov_degrees(cameras.detach().to(torch.float64)[:, 7:9])
    median = np.median(_as_numpy(fov), axis=0)
    return float(median[0]), float(median[1])


def up_vector_consistency(cameras: torch.Tensor) -> float:
    """Length of the mean camera up vector; 1 when all cameras share an up direction."""
    g = _unit_cameras(cameras)
    R = quat_to_rotmat(g[:, :4])
    # image rows grow downward, so up is -y of the camera
    up = -R.transpose(-1, -2)[:, :, 1]
    return float(up.mean(dim=0).norm())
