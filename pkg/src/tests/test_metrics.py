import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from src.analytics.metrics import (
    auc_from_errors,
    depth_metrics,
    point_distance,
    point_error,
    pose_auc,
    relative_pose_errors,
)
from src.errors import ConfigError, GeometryError
from src.tests.helpers import identity_cameras, random_cameras


def z_rotation(angle_deg: float) -> torch.Tensor:
    half = math.radians(angle_deg) / 2.0
    return torch.tensor([math.cos(half), 0.0, 0.0, math.sin(half)], dtype=torch.float64)


def test_pose_auc_perfect_prediction():
    """Test pose AUC of a perfect prediction."""
    gt = random_cameras(6, torch.Generator().manual_seed(0))
    result = pose_auc(gt.clone(), gt, threshold=3.0)
    assert result.auc == pytest.approx(100.0)
    assert result.num_pairs == 15
    assert result.excluded_pairs == 0
    assert all(p.error < 1e-6 for p in result.pairs)


def test_pose_auc_all_errors_beyond_threshold():
    """Test pose AUC when every error exceeds the threshold."""
    gt = identity_cameras(2)
    gt[1, 4] = 1.0
    pred = gt.clone()
    pred[1, :4] = z_rotation(6.0)
    result = pose_auc(pred, gt, threshold=3.0)
    assert result.pairs[0].rotation_deg == pytest.approx(6.0)
    assert result.auc == 0.0


def test_pose_auc_uses_max_of_rotation_and_translation():
    """Test pose error as the larger of both angles."""
    gt = identity_cameras(2)
    gt[1, 4:7] = torch.tensor([1.0, 0.0, 0.0])
    pred = gt.clone()
    pred[1, :4] = z_rotation(1.0)
    # translation rotated by 2 degrees about z
    pred[1, 4:7] = torch.tensor([math.cos(math.radians(2.0)), math.sin(math.radians(2.0)), 0.0])
    pair = pose_auc(pred, gt).pairs[0]
    assert pair.rotation_deg == pytest.approx(1.0)
    assert pair.translation_deg == pytest.approx(2.0)
    assert pair.error == pytest.approx(2.0)


def test_auc_from_hand_set_errors():
    """Test AUC on hand-set errors."""
    # (3 - 0) + (3 - 1.5) + 0 over 3 * 3
    assert auc_from_errors([0.0, 1.5, 4.0], 3.0) == pytest.approx(100.0 * 4.5 / 9.0)
    assert auc_from_errors([], 3.0) == 0.0
    assert auc_from_errors([3.0], 3.0) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=0.0, max_value=60.0), min_size=1, max_size=20))
def test_auc_grows_with_threshold(errors):
    """Test AUC monotonicity in the threshold."""
    assert 0.0 <= auc_from_errors(errors, 3.0) <= auc_from_errors(errors, 30.0) <= 100.0


def test_zero_baseline_pairs_are_excluded():
    """Test pairs without a baseline."""
    gt = identity_cameras(3)
    gt[2, 4] = 1.0
    pairs, excluded = relative_pose_errors(gt.clone(), gt)
    assert excluded == 1
    assert [(p.i, p.j) for p in pairs] == [(0, 2), (1, 2)]


def test_pose_auc_needs_two_cameras():
    """Test pose AUC with one camera."""
    with pytest.raises(GeometryError):
        pose_auc(identity_cameras(1), identity_cameras(1))
    with pytest.raises(GeometryError):
        pose_auc(identity_cameras(2), identity_cameras(3))


def test_depth_metrics_exact_and_scaled():
    """Test AbsRel and delta with and without alignment."""
    gt = torch.rand(2, 4, 4, generator=torch.Generator().manual_seed(1), dtype=torch.float64) + 0.5
    valid = torch.ones_like(gt, dtype=torch.bool)
    exact = depth_metrics(gt.clone(), gt, valid)
    assert exact.abs_rel == pytest.approx(0.0, abs=1e-12)
    assert exact.delta == 100.0

    scaled = depth_metrics(gt / 3.0, gt, valid, alignment="median")
    assert scaled.scale == pytest.approx(3.0)
    assert scaled.abs_rel == pytest.approx(0.0, abs=1e-12)

    raw = depth_metrics(gt / 2.0, gt, valid, alignment="none")
    assert raw.abs_rel == pytest.approx(0.5)
    assert raw.delta == 0.0


def test_depth_metrics_ignores_invalid_pixels():
    """Test depth metrics with invalid pixels."""
    gt = torch.full((1, 2, 2), 2.0, dtype=torch.float64)
    pred = gt.clone()
    pred[0, 0, 0] = 100.0
    valid = torch.ones_like(gt, dtype=torch.bool)
    valid[0, 0, 0] = False
    assert depth_metrics(pred, gt, valid, alignment="none").abs_rel == 0.0


def test_depth_metrics_errors():
    """Test depth metrics input errors."""
    gt = torch.ones(1, 2, 2, dtype=torch.float64)
    with pytest.raises(ConfigError):
        depth_metrics(gt, gt, gt > 0, alignment="mean")
    with pytest.raises(GeometryError):
        depth_metrics(gt, gt, gt < 0)


def test_point_distance():
    """Test raw point distance."""
    gt = torch.zeros(1, 2, 2, 3, dtype=torch.float64)
    pred = gt.clone()
    pred[..., 0] = 2.0
    valid = torch.ones(1, 2, 2, dtype=torch.bool)
    assert point_distance(pred, gt, valid) == pytest.approx(2.0)
    with pytest.raises(GeometryError):
        point_distance(pred, gt, ~valid)


def test_point_error_zero_for_ground_truth(plane_bundle):
    """Test point error of the ground truth."""
    assert point_error(plane_bundle.depths, plane_bundle.cameras, plane_bundle) == pytest.approx(0.0, abs=1e-9)


def test_point_error_is_scale_invariant(plane_bundle):
    """Test point error of a rescaled prediction."""
    cameras = plane_bundle.cameras.clone()
    cameras[:, 4:7] *= 5.0
    assert point_error(plane_bundle.depths * 5.0, cameras, plane_bundle) == pytest.approx(0.0, abs=1e-9)


def test_point_error_detects_wrong_depth(plane_bundle):
    """Test point error with a wrong depth."""
    depths = plane_bundle.depths.clone()
    depths[1] *= 1.5
    assert point_error(depths, plane_bundle.cameras, plane_bundle) > 0.01
