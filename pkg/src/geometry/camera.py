"""
Pinhole camera model.

A camera is a 9-vector g = (q, t, f): unit quaternion q = (w, x, y, z), translation
t and focal lengths f normalized by half the image width/height. Extrinsics map
reference-frame points into camera i: X_cam = R(q) X_ref + t. The principal point
is the image center (W/2, H/2) in integer pixel-index coordinates.

All functions are differentiable torch code and work in float32 or float64.
Batched functions take a leading frame dimension B.
"""

from dataclasses import dataclass
from typing import Tuple

import torch

from src.errors import DegenerateGeometryError, GeometryError, ShapeError

UNIT_TOLERANCE = 1e-6


def split_encoding(g: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Split (..., 9) camera encodings into q (..., 4), t (..., 3), f (..., 2)."""
    if g.shape[-1] != 9:
        raise ShapeError(f"camera encoding must have 9 components, got shape {tuple(g.shape)}")
    return g[..., :4], g[..., 4:7], g[..., 7:9]


def canonicalize_quaternion(q: torch.Tensor) -> torch.Tensor:
    """Flip quaternions into the w >= 0 hemisphere."""
    return torch.where(q[..., :1] < 0, -q, q)


def normalize_quaternion(q: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    """Scale to unit norm and canonicalize. A zero quaternion stays zero."""
    norm = q.norm(dim=-1, keepdim=True).clamp_min(eps)
    return canonicalize_quaternion(q / norm)


def canonicalize_encoding(g: torch.Tensor) -> torch.Tensor:
    q, t, f = split_encoding(g)
    return torch.cat([canonicalize_quaternion(q), t, f], dim=-1)


def quaternion_multiply(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Hamilton product a * b, so R(a * b) = R(a) R(b)."""
    aw, ax, ay, az = a.unbind(-1)
    bw, bx, by, bz = b.unbind(-1)
    return torch.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], dim=-1)


def quaternion_conjugate(q: torch.Tensor) -> torch.Tensor:
    return q * q.new_tensor([1.0, -1.0, -1.0, -1.0])


def quat_to_rotmat(q: torch.Tensor, check: bool = True) -> torch.Tensor:
    """Convert (..., 4) unit quaternions to (..., 3, 3) rotation matrices.

    Raises:
        GeometryError: if check is set and a quaternion norm is off by more than 1e-6.
    """
    if q.shape[-1] != 4:
        raise ShapeError(f"quaternion must have 4 components, got shape {tuple(q.shape)}")
    if check:
        deviation = (q.detach().norm(dim=-1) - 1.0).abs()
        if deviation.numel() and float(deviation.max()) > UNIT_TOLERANCE:
            raise GeometryError(f"non-unit quaternion (norm deviation {float(deviation.max()):.3e})")

    w, x, y, z = q.unbind(-1)
    rows = [
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ]
    return torch.stack(rows, dim=-1).reshape(q.shape[:-1] + (3, 3))


def intrinsics_matrix(f: torch.Tensor, width: int, height: int) -> torch.Tensor:
    """Pinhole K from normalized focal lengths, principal point at the image center."""
    fx = f[..., 0] * (width / 2.0)
    fy = f[..., 1] * (height / 2.0)
    zeros = torch.zeros_like(fx)
    ones = torch.ones_like(fx)
    rows = [
        fx, zeros, zeros + width / 2.0,
        zeros, fy, zeros + height / 2.0,
        zeros, zeros, ones,
    ]
    return torch.stack(rows, dim=-1).reshape(f.shape[:-1] + (3, 3))


def _check_focal(f: torch.Tensor) -> None:
    if f.numel() and bool((f.detach() <= 0).any()):
        raise GeometryError("focal lengths must be positive")


def pixel_grid(height: int, width: int, dtype=torch.float64, device=None) -> torch.Tensor:
    """(H, W, 2) grid of (u, v) pixel-index coordinates."""
    v, u = torch.meshgrid(
        torch.arange(height, dtype=dtype, device=device),
        torch.arange(width, dtype=dtype, device=device),
        indexing="ij",
    )
    return torch.stack([u, v], dim=-1)


def camera_rays(f: torch.Tensor, height: int, width: int) -> torch.Tensor:
    """(B, H, W, 3) camera-frame rays with unit z for every pixel."""
    _check_focal(f)
    grid = pixel_grid(height, width, dtype=f.dtype, device=f.device)
    fx = (f[:, 0] * (width / 2.0))[:, None, None]
    fy = (f[:, 1] * (height / 2.0))[:, None, None]
    x = (grid[..., 0] - width / 2.0) / fx
    y = (grid[..., 1] - height / 2.0) / fy
    return torch.stack([x, y, torch.ones_like(x)], dim=-1)


def unproject_depth(depth: torch.Tensor, g: torch.Tensor, check: bool = True) -> torch.Tensor:
    """Back-project (B, H, W) depth maps into the reference frame.

    Args:
        depth: Per-pixel depth along the optical axis.
        g: (B, 9) camera encodings.
        check: Verify quaternions are unit length.

    Returns:
        (B, H, W, 3) points in the reference-camera frame.
    """
    if depth.dim() != 3 or g.dim() != 2 or depth.shape[0] != g.shape[0]:
        raise ShapeError(f"expected depth (B,H,W) and cameras (B,9), got {tuple(depth.shape)} and {tuple(g.shape)}")
    q, t, f = split_encoding(g)
    height, width = depth.shape[-2:]
    rays = camera_rays(f, height, width)
    cam_points = rays * depth[..., None]
    R = quat_to_rotmat(q, check=check)
    # X_ref = R^T (X_cam - t)
    return torch.einsum("bji,bhwj->bhwi", R, cam_points - t[:, None, None, :])


def transform_points(points: torch.Tensor, g: torch.Tensor, check: bool = True) -> torch.Tensor:
    """Map (B, M, 3) reference-frame points into each camera frame."""
    q, t, _ = split_encoding(g)
    R = quat_to_rotmat(q, check=check)
    return torch.einsum("bij,bmj->bmi", R, points) + t[:, None, :]


def project_points(points: torch.Tensor, g: torch.Tensor, width: int, height: int,
                   check: bool = True) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Project (B, M, 3) reference-frame points into cameras (B, 9).

    Returns:
        uv (B, M, 2) pixel coordinates (not clamped), depth (B, M) in the camera
        frame, and an in-frustum flag (B, M): positive depth and 0 <= u < W, 0 <= v < H.
    """
    _, _, f = split_encoding(g)
    _check_focal(f)
    cam = transform_points(points, g, check=check)
    z = cam[..., 2]
    safe_z = torch.where(z.abs() > 1e-12, z, torch.full_like(z, 1e-12))
    fx = (f[:, 0] * (width / 2.0))[:, None]
    fy = (f[:, 1] * (height / 2.0))[:, None]
    u = fx * cam[..., 0] / safe_z + width / 2.0
    v = fy * cam[..., 1] / safe_z + height / 2.0
    uv = torch.stack([u, v], dim=-1)
    in_frustum = (z > 0) & (u >= 0) & (u < width) & (v >= 0) & (v < height)
    return uv, z, in_frustum


def camera_centers(g: torch.Tensor) -> torch.Tensor:
    """(..., 3) camera centers C = -R^T t in the reference frame."""
    q, t, _ = split_encoding(g)
    R = quat_to_rotmat(q)
    return -torch.einsum("...ji,...j->...i", R, t)


def relative_to_reference(g: torch.Tensor, reference: int = 0) -> torch.Tensor:
    """Re-express (N, 9) cameras in the frame of camera `reference`.

    Quaternions are normalized and canonicalized first; the reference camera
    comes out exactly as identity rotation and zero translation.
    """
    q, t, f = split_encoding(g)
    q = normalize_quaternion(q)
    q_ref = q[reference:reference + 1]
    t_ref = t[reference:reference + 1]
    q_rel = canonicalize_quaternion(quaternion_multiply(q, quaternion_conjugate(q_ref)))
    R_rel = quat_to_rotmat(q_rel, check=False)
    t_rel = t - torch.einsum("nij,nj->ni", R_rel, t_ref.expand_as(t))

    identity = g.new_zeros(7)
    identity[0] = 1.0
    rel = torch.cat([q_rel, t_rel], dim=-1)
    mask = torch.zeros(g.shape[0], 1, dtype=torch.bool, device=g.device)
    mask[reference] = True
    rel = torch.where(mask, identity.expand_as(rel), rel)
    return torch.cat([rel, f], dim=-1)


def fov_degrees(f: torch.Tensor) -> torch.Tensor:
    """Horizontal/vertical field of view: tan(fov/2) = 1/f for half-size-normalized f."""
    return torch.rad2deg(2.0 * torch.atan(1.0 / f))


def _skew(v: torch.Tensor) -> torch.Tensor:
    x, y, z = v.unbind(-1)
    zero = torch.zeros_like(x)
    return torch.stack([zero, -z, y, z, zero, -x, -y, x, zero], dim=-1).reshape(v.shape[:-1] + (3, 3))


@dataclass
class Camera:
    """A single pinhole camera with its image size."""

    q: torch.Tensor
    t: torch.Tensor
    f: torch.Tensor
    width: int
    height: int

    @classmethod
    def from_vector(cls, g: torch.Tensor, width: int, height: int) -> "Camera":
        q, t, f = split_encoding(g)
        return cls(q=q, t=t, f=f, width=width, height=height)

    @classmethod
    def identity(cls, width: int, height: int, focal: float = 1.0, dtype=torch.float64) -> "Camera":
        g = torch.tensor([1, 0, 0, 0, 0, 0, 0, focal, focal], dtype=dtype)
        return cls.from_vector(g, width, height)

    def to_vector(self) -> torch.Tensor:
        return torch.cat([self.q, self.t, self.f])

    def rotation(self) -> torch.Tensor:
        return quat_to_rotmat(self.q)

    def intrinsics(self) -> torch.Tensor:
        _check_focal(self.f)
        return intrinsics_matrix(self.f, self.width, self.height)

    def center(self) -> torch.Tensor:
        return camera_centers(self.to_vector())

    def fov(self) -> torch.Tensor:
        return fov_degrees(self.f)


def fundamental_matrix(cam_a: Camera, cam_b: Camera) -> torch.Tensor:
    """F with x_b^T F x_a = 0 for corresponding homogeneous pixels.

    Raises:
        DegenerateGeometryError: if both cameras share the same center.
    """
    baseline = cam_b.center() - cam_a.center()
    scale = max(float(cam_a.center().norm()), float(cam_b.center().norm()), 1.0)
    if float(baseline.norm()) <= 1e-12 * scale:
        raise DegenerateGeometryError("coincident camera centers: epipolar geometry undefined")

    R_a, R_b = cam_a.rotation(), cam_b.rotation()
    R_ab = R_b @ R_a.T
    t_ab = cam_b.t - R_ab @ cam_a.t
    essential = _skew(t_ab) @ R_ab
    K_a_inv = torch.linalg.inv(cam_a.intrinsics())
    K_b_inv = torch.linalg.inv(cam_b.intrinsics())
    return K_b_inv.T @ essential @ K_a_inv


def sampson_distance(pixel_a: torch.Tensor, pixel_b: torch.Tensor, cam_a: Camera, cam_b: Camera) -> torch.Tensor:
    """First-order geometric epipolar error in px^2 for (..., 2) pixel pairs."""
    return sampson_from_fundamental(fundamental_matrix(cam_a, cam_b), pixel_a, pixel_b)


def sampson_from_fundamental(F: torch.Tensor, pixel_a: torch.Tensor, pixel_b: torch.Tensor) -> torch.Tensor:
    """Sampson distance for a given F; F may carry leading batch dims matching the pixels."""
    ones = torch.ones_like(pixel_a[..., :1])
    xa = torch.cat([pixel_a, ones], dim=-1)
    xb = torch.cat([pixel_b, ones], dim=-1)
    Fxa = torch.einsum("...ij,...j->...i", F, xa)
    Ftxb = torch.einsum("...ji,...j->...i", F, xb)
    numerator = (xb * Fxa).sum(-1) ** 2
    denominator = Fxa[..., 0] ** 2 + Fxa[..., 1] ** 2 + Ftxb[..., 0] ** 2 + Ftxb[..., 1] ** 2
    return numerator / denominator.clamp_min(torch.finfo(denominator.dtype).tiny)
