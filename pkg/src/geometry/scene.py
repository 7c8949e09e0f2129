"""
Scene containers and unit-space normalization.

A SceneBundle is one sequence: images, cameras, depth maps and validity masks.
Frame 0 is always the reference frame.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Sequence, Tuple

import torch

from src.errors import GeometryError, ShapeError
from src.geometry.camera import (
    Camera,
    project_points,
    relative_to_reference,
    unproject_depth,
)


@dataclass
class DepthMap:
    values: torch.Tensor
    valid: torch.Tensor


@dataclass
class PointMap:
    points: torch.Tensor
    valid: torch.Tensor


@dataclass
class SceneBundle:
    """Images, cameras and depths of one sequence.

    Unlabeled bundles (self-supervised input) carry cameras=None and depths=None.
    `dynamic` marks pixels of moving objects: depth-valid but never used for
    positive correspondences. `confidence` is only set on prediction bundles.
    """

    images: torch.Tensor
    cameras: Optional[torch.Tensor] = None
    depths: Optional[torch.Tensor] = None
    valid: Optional[torch.Tensor] = None
    dynamic: Optional[torch.Tensor] = None
    confidence: Optional[torch.Tensor] = None
    name: str = "sequence"
    metadata: Dict[str, Any] = field(default_factory=dict)
    reference_index: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.images.dim() != 4 or self.images.shape[1] != 3:
            raise ShapeError(f"images must be (N,3,H,W), got {tuple(self.images.shape)}")
        n, _, h, w = self.images.shape
        if n < 1:
            raise ShapeError("a bundle needs at least one frame")
        if self.reference_index != 0:
            raise ShapeError("the reference frame is always frame 0")
        if self.cameras is not None and tuple(self.cameras.shape) != (n, 9):
            raise ShapeError(f"cameras must be ({n},9), got {tuple(self.cameras.shape)}")
        for label in ("depths", "valid", "dynamic", "confidence"):
            value = getattr(self, label)
            if value is not None and tuple(value.shape) != (n, h, w):
                raise ShapeError(f"{label} must be ({n},{h},{w}), got {tuple(value.shape)}")
        if self.depths is not None and self.valid is None:
            self.valid = torch.isfinite(self.depths) & (self.depths > 0)

    @property
    def num_frames(self) -> int:
        return self.images.shape[0]

    @property
    def height(self) -> int:
        return self.images.shape[2]

    @property
    def width(self) -> int:
        return self.images.shape[3]

    @property
    def is_labeled(self) -> bool:
        return self.cameras is not None and self.depths is not None

    def camera(self, index: int) -> Camera:
        return Camera.from_vector(self.cameras[index], self.width, self.height)

    def depth_map(self, index: int) -> DepthMap:
        return DepthMap(values=self.depths[index], valid=self.valid[index])

    def static_valid(self) -> torch.Tensor:
        """Valid pixels that are not marked dynamic."""
        if self.dynamic is None:
            return self.valid
        return self.valid & ~self.dynamic

    def subset(self, indices: Sequence[int]) -> "SceneBundle":
        """Frames in the given order; indices[0] becomes the reference."""
        index = torch.as_tensor(list(indices), dtype=torch.long)

        def pick(value):
            return None if value is None else value[index]

        return replace(
            self,
            images=self.images[index],
            cameras=pick(self.cameras),
            depths=pick(self.depths),
            valid=pick(self.valid),
            dynamic=pick(self.dynamic),
            confidence=pick(self.confidence),
            metadata=dict(self.metadata),
        )

    def to(self, dtype: torch.dtype) -> "SceneBundle":
        """Cast floating-point tensors; masks keep their boolean type."""

        def cast(value):
            return None if value is None else value.to(dtype)

        return replace(
            self,
            images=self.images.to(dtype),
            cameras=cast(self.cameras),
            depths=cast(self.depths),
            confidence=cast(self.confidence),
        )


def unproject(depth: DepthMap, cam: Camera) -> PointMap:
    """Unproject a depth map through a camera into reference-frame points."""
    if tuple(depth.values.shape) != (cam.height, cam.width):
        raise ShapeError(
            f"depth map {tuple(depth.values.shape)} does not match camera {cam.height}x{cam.width}"
        )
    points = unproject_depth(depth.values[None], cam.to_vector()[None])[0]
    return PointMap(points=points, valid=depth.valid.clone())


def project(points, cam: Camera) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Project a PointMap or a (..., 3) tensor into a camera.

    Returns (uv, depth, in_frustum) shaped like the input points. Out-of-frustum
    points are flagged, never clamped.
    """
    values = getattr(points, "points", points)
    lead = values.shape[:-1]
    uv, z, inside = project_points(values.reshape(1, -1, 3), cam.to_vector()[None], cam.width, cam.height)
    return uv.reshape(lead + (2,)), z.reshape(lead), inside.reshape(lead)


def bundle_points(bundle: SceneBundle) -> torch.Tensor:
    """(N, H, W, 3) reference-frame points of every pixel."""
    return unproject_depth(bundle.depths, bundle.cameras)


def mean_point_distance(points: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
    """Mean distance of valid points to the origin."""
    if not bool(valid.any()):
        raise GeometryError("no valid depth pixels to normalize by")
    distances = torch.where(valid, points.norm(dim=-1), torch.zeros_like(points[..., 0]))
    return distances.sum() / valid.sum()


def normalize_scene(bundle: SceneBundle) -> SceneBundle:
    """Express a labeled bundle in camera 0's frame at unit mean point distance.

    Depths and translations are divided by the mean distance of all valid
    unprojected points to the origin. Applied to ground truth, never to the
    training predictions.

    Raises:
        GeometryError: if the bundle has no valid depth pixel.
    """
    if not bundle.is_labeled:
        raise GeometryError("normalize_scene needs cameras and depths")
    if not bool(bundle.valid.any()):
        raise GeometryError("no valid depth pixels to normalize by")

    cameras = relative_to_reference(bundle.cameras)
    depths = torch.where(bundle.valid, bundle.depths, torch.zeros_like(bundle.depths))
    points = unproject_depth(depths, cameras)
    scale = mean_point_distance(points, bundle.valid)

    cameras = torch.cat([cameras[:, :4], cameras[:, 4:7] / scale, cameras[:, 7:]], dim=-1)
    return replace(
        bundle,
        cameras=cameras,
        depths=torch.where(bundle.valid, bundle.depths / scale, bundle.depths),
        metadata={**bundle.metadata, "normalization_scale": float(scale)},
    )

