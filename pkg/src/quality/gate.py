"""
Feature extraction for a whole sequence and the accept/reject gate.

The gate rejects when any threshold is crossed strictly; a value sitting exactly
on a threshold is accepted.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import torch

from src.config.experiment import QualityThresholds
from src.errors import QualityError
from src.geometry.camera import normalize_quaternion, unproject_depth
from src.geometry.scene import SceneBundle
from src.quality.consistency import multi_view_consistency
from src.quality.features import (
    completeness,
    field_of_view,
    noise_fraction,
    parallax_stat,
    pca_shape,
    registration_ratio,
    trajectory_smoothness,
    up_vector_consistency,
)

logger = logging.getLogger(__name__)


@dataclass
class QualityFeatures:
    registration_ratio: float = 0.0
    fov_x: Optional[float] = None
    fov_y: Optional[float] = None
    distortion_ratio: float = 0.0
    valid_depth_fraction: float = 0.0
    s_trans: Optional[float] = None
    s_rot: Optional[float] = None
    median_max_parallax: Optional[float] = None
    linearity: Optional[float] = None
    planarity: Optional[float] = None
    scattering: Optional[float] = None
    completeness: Optional[float] = None
    noise_fraction: Optional[float] = None
    up_consistency: Optional[float] = None
    consistency_fraction: Optional[float] = None
    # features that could not be computed, with the reason
    unavailable: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class GateVerdict:
    accepted: bool
    reasons: List[str] = field(default_factory=list)
    # short machine-readable tag per reason
    codes: List[str] = field(default_factory=list)


def heuristic_gate(features: QualityFeatures, thresholds: Optional[QualityThresholds] = None) -> GateVerdict:
    t = thresholds or QualityThresholds()
    reasons, codes = [], []
    if features.registration_ratio < t.min_registration_ratio:
        reasons.append(f"registration ratio {features.registration_ratio:.4f} below {t.min_registration_ratio}")
        codes.append("registration")
    low, high = t.fov_range
    fovs = [f for f in (features.fov_x, features.fov_y) if f is not None]
    if not fovs or any(f < low or f > high for f in fovs):
        reasons.append(f"fov out of range [{low}, {high}]")
        codes.append("fov")
    if features.distortion_ratio > t.max_distortion_ratio:
        reasons.append(f"distortion ratio {features.distortion_ratio:.3f} above {t.max_distortion_ratio}")
        codes.append("distortion")
    if features.valid_depth_fraction < t.min_valid_depth_fraction:
        reasons.append(f"valid depth fraction {features.valid_depth_fraction:.4f} below {t.min_valid_depth_fraction}")
        codes.append("valid_depth")
    if features.linearity is not None and features.linearity > t.max_linearity:
        reasons.append(f"linearity {features.linearity:.4f} above {t.max_linearity}")
        codes.append("linearity")
    return GateVerdict(accepted=not reasons, reasons=reasons, codes=codes)


def sample_points(bundle: SceneBundle, max_points: int, seed: int = 0) -> torch.Tensor:
    """Up to max_points valid reference-frame points, sampled without replacement."""
    g = bundle.cameras.detach().to(torch.float64)
    g = torch.cat([normalize_quaternion(g[:, :4]), g[:, 4:]], dim=-1)
    depths = torch.where(bundle.valid, bundle.depths.to(torch.float64), torch.zeros((), dtype=torch.float64))
    points = unproject_depth(depths, g)[bundle.valid]
    if points.shape[0] > max_points:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(points.shape[0], size=max_points, replace=False))
        points = points[torch.from_numpy(keep)]
    return points


def extract_features(bundle: SceneBundle, thresholds: Optional[QualityThresholds] = None,
                     seed: int = 0) -> QualityFeatures:
    """Compute every QualityFeatures field that the bundle supports."""
    t = thresholds or QualityThresholds()
    features = QualityFeatures(
        registration_ratio=registration_ratio(bundle.cameras, bundle.num_frames),
        distortion_ratio=float(bundle.metadata.get("distortion_ratio", 0.0)),
    )
    if not bundle.is_labeled:
        features.unavailable["geometry"] = "bundle has no cameras or depths"
        return features

    features.fov_x, features.fov_y = field_of_view(bundle.cameras)
    features.completeness = completeness(bundle.depths, bundle.valid)
    features.up_consistency = up_vector_consistency(bundle.cameras)

    def attempt(name, fn):
        try:
            return fn()
        except QualityError as e:
            features.unavailable[name] = str(e)
            logger.debug(f"{bundle.name}: {name} unavailable ({e})")
            return None

    consistency = attempt("consistency", lambda: multi_view_consistency(bundle, t.consistency_tolerance))
    if consistency is not None:
        features.valid_depth_fraction = consistency.pixel_fraction
        features.consistency_fraction = consistency.valid_fraction

    smoothness = attempt("smoothness", lambda: trajectory_smoothness(bundle.cameras))
    if smoothness is not None:
        features.s_trans, features.s_rot = smoothness

    points = sample_points(bundle, t.max_points, seed)
    features.median_max_parallax = attempt(
        "parallax",
        lambda: parallax_stat(points, bundle.cameras, bundle.width, bundle.height, t.parallax_samples, seed),
    )
    shape = attempt("shape", lambda: pca_shape(points))
    if shape is not None:
        features.linearity, features.planarity, features.scattering = shape
    features.noise_fraction = attempt("noise", lambda: noise_fraction(points, t.noise_neighbors))
    return features
