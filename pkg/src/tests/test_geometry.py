"""
Tests for the camera model and scene normalization.
"""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from src.errors import DegenerateGeometryError, GeometryError, ShapeError
from src.geometry.camera import (
    Camera,
    camera_centers,
    fov_degrees,
    normalize_quaternion,
    project_points,
    quat_to_rotmat,
    relative_to_reference,
    sampson_distance,
    split_encoding,
)
from src.geometry.scene import (
    DepthMap,
    SceneBundle,
    bundle_points,
    normalize_scene,
    project,
    unproject,
)
from src.tests.helpers import flat_bundle, random_cameras


def test_identity_quaternion_gives_identity_matrix():
    """Test rotation of the identity quaternion."""
    R = quat_to_rotmat(torch.tensor([1.0, 0.0, 0.0, 0.0], dtype=torch.float64))
    assert torch.equal(R, torch.eye(3, dtype=torch.float64))


def test_half_turn_about_z():
    """Test a half turn about the z axis."""
    R = quat_to_rotmat(torch.tensor([0.0, 0.0, 0.0, 1.0], dtype=torch.float64))
    assert torch.equal(R, torch.diag(torch.tensor([-1.0, -1.0, 1.0], dtype=torch.float64)))


def test_non_unit_quaternion_rejected():
    """Test rejecting a non-unit quaternion."""
    with pytest.raises(GeometryError):
        quat_to_rotmat(torch.tensor([1.0, 0.1, 0.0, 0.0], dtype=torch.float64))


def test_encoding_must_have_nine_components():
    """Test camera encoding length check."""
    with pytest.raises(ShapeError):
        split_encoding(torch.zeros(3, 8))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4).filter(lambda v: sum(x * x for x in v) > 1e-2))
def test_rotation_is_orthonormal(values):
    """Test rotation matrices are orthonormal."""
    q = normalize_quaternion(torch.tensor(values, dtype=torch.float64))
    R = quat_to_rotmat(q)
    assert float((R.T @ R - torch.eye(3, dtype=torch.float64)).abs().max()) < 1e-12
    assert float(torch.linalg.det(R)) == pytest.approx(1.0, abs=1e-12)


def test_rotation_matches_scipy():
    """Test rotation matrices against scipy."""
    g = torch.Generator().manual_seed(3)
    q = normalize_quaternion(torch.randn(16, 4, generator=g, dtype=torch.float64))
    expected = Rotation.from_quat(q.numpy()[:, [1, 2, 3, 0]]).as_matrix()
    np.testing.assert_allclose(quat_to_rotmat(q).numpy(), expected, atol=1e-12)


def test_center_pixel_unprojects_onto_optical_axis():
    """Test unprojecting the principal point."""
    cam = Camera.identity(width=8, height=8)
    depth = DepthMap(values=torch.full((8, 8), 2.5, dtype=torch.float64), valid=torch.ones(8, 8, dtype=torch.bool))
    points = unproject(depth, cam)
    assert torch.equal(points.points[4, 4], torch.tensor([0.0, 0.0, 2.5], dtype=torch.float64))


def test_zero_depth_unprojects_to_reference_origin():
    """Test unprojecting zero depth."""
    cam = Camera.identity(width=8, height=6)
    depth = DepthMap(values=torch.zeros(6, 8, dtype=torch.float64), valid=torch.ones(6, 8, dtype=torch.bool))
    assert torch.equal(unproject(depth, cam).points, torch.zeros(6, 8, 3, dtype=torch.float64))


def test_zero_focal_rejected():
    """Test rejecting a zero focal length."""
    cam = Camera.identity(width=8, height=8, focal=0.0)
    depth = DepthMap(values=torch.ones(8, 8, dtype=torch.float64), valid=torch.ones(8, 8, dtype=torch.bool))
    with pytest.raises(GeometryError):
        unproject(depth, cam)


def test_point_on_axis_projects_to_center():
    """Test projecting a point on the optical axis."""
    cam = Camera.identity(width=8, height=6)
    uv, z, inside = project(torch.tensor([0.0, 0.0, 3.0], dtype=torch.float64), cam)
    assert uv.tolist() == [4.0, 3.0]
    assert float(z) == 3.0
    assert bool(inside)


def test_point_behind_camera_flagged():
    """Test projecting a point behind the camera."""
    cam = Camera.identity(width=8, height=8)
    _, z, inside = project(torch.tensor([0.0, 0.0, -1.0], dtype=torch.float64), cam)
    assert float(z) == -1.0
    assert not bool(inside)


def test_projection_matches_homogeneous_oracle():
    """Test projection against a homogeneous-coordinates computation."""
    g = torch.Generator().manual_seed(7)
    cams = random_cameras(3, g)
    points = torch.randn(3, 20, 3, generator=g, dtype=torch.float64)
    uv, z, _ = project_points(points, cams, width=32, height=24)
    for i in range(3):
        cam = Camera.from_vector(cams[i], 32, 24)
        P = cam.intrinsics() @ torch.cat([cam.rotation(), cam.t[:, None]], dim=1)
        homog = torch.cat([points[i], torch.ones(20, 1, dtype=torch.float64)], dim=1) @ P.T
        assert torch.allclose(uv[i], homog[:, :2] / homog[:, 2:], atol=1e-9, rtol=1e-9)
        assert torch.allclose(z[i], homog[:, 2], atol=1e-12, rtol=0)


def test_unprojected_pixels_project_back():
    """Test unprojection followed by projection."""
    g = torch.Generator().manual_seed(11)
    cams = random_cameras(2, g)
    depths = 1.0 + torch.rand(2, 6, 8, generator=g, dtype=torch.float64)
    bundle = SceneBundle(images=torch.zeros(2, 3, 6, 8, dtype=torch.float64), cameras=cams, depths=depths)
    points = bundle_points(bundle)
    for i in range(2):
        uv, z, _ = project(points[i], bundle.camera(i))
        v, u = torch.meshgrid(torch.arange(6.0, dtype=torch.float64), torch.arange(8.0, dtype=torch.float64),
                              indexing="ij")
        assert torch.allclose(uv, torch.stack([u, v], dim=-1), atol=1e-9)
        assert torch.allclose(z, depths[i], atol=1e-12)


def test_relative_to_reference_makes_frame_zero_identity():
    """Test re-expressing cameras relative to frame 0."""
    g = torch.Generator().manual_seed(5)
    cams = random_cameras(4, g)
    rel = relative_to_reference(cams)
    assert rel[0, :7].tolist() == [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    # camera 1 seen from camera 0: relative rotation R1 R0^T
    R = quat_to_rotmat(cams[:, :4])
    assert torch.allclose(quat_to_rotmat(rel[1, :4]), R[1] @ R[0].T, atol=1e-12)
    assert bool((rel[:, 0] >= 0).all())


def test_fov_of_unit_focal_is_ninety_degrees():
    """Test field of view of unit focal."""
    assert float(fov_degrees(torch.tensor(1.0, dtype=torch.float64))) == pytest.approx(90.0, abs=1e-12)


def _labeled(seed: int) -> SceneBundle:
    g = torch.Generator().manual_seed(seed)
    return SceneBundle(
        images=torch.rand(3, 3, 6, 8, generator=g, dtype=torch.float64),
        cameras=random_cameras(3, g),
        depths=1.0 + 3.0 * torch.rand(3, 6, 8, generator=g, dtype=torch.float64),
    )


def test_normalized_bundle_is_a_fixed_point():
    """Test normalizing an already normalized bundle."""
    once = normalize_scene(_labeled(1))
    twice = normalize_scene(once)
    assert torch.allclose(twice.cameras, once.cameras, atol=1e-12, rtol=0)
    assert torch.allclose(twice.depths, once.depths, atol=1e-12, rtol=0)


def test_normalization_is_scale_invariant():
    """Test normalization of a rescaled scene."""
    bundle = _labeled(2)
    scaled = SceneBundle(
        images=bundle.images,
        cameras=torch.cat([bundle.cameras[:, :4], 3.7 * bundle.cameras[:, 4:7], bundle.cameras[:, 7:]], dim=-1),
        depths=3.7 * bundle.depths,
    )
    a, b = normalize_scene(bundle), normalize_scene(scaled)
    assert torch.allclose(a.cameras, b.cameras, atol=1e-10)
    assert torch.allclose(a.depths, b.depths, atol=1e-10)


def test_normalized_points_have_unit_mean_distance():
    """Test mean point distance after normalization."""
    bundle = normalize_scene(_labeled(3))
    distance = bundle_points(bundle).norm(dim=-1).mean()
    assert float(distance) == pytest.approx(1.0, abs=1e-12)


def test_normalize_without_valid_pixels_fails():
    """Test normalizing a bundle with no valid pixels."""
    bundle = flat_bundle()
    bundle.valid = torch.zeros_like(bundle.valid)
    with pytest.raises(GeometryError):
        normalize_scene(bundle)


def _stereo_cameras():
    angle = Rotation.from_rotvec([0.0, 0.1, 0.02]).as_quat()
    q = torch.tensor([angle[3], angle[0], angle[1], angle[2]], dtype=torch.float64)
    cam_a = Camera.identity(width=32, height=24)
    cam_b = Camera(q=q, t=torch.tensor([-1.0, 0.1, 0.0], dtype=torch.float64),
                   f=torch.tensor([1.2, 1.1], dtype=torch.float64), width=32, height=24)
    return cam_a, cam_b


def test_sampson_vanishes_on_true_correspondences():
    """Test Sampson distance of exact correspondences."""
    cam_a, cam_b = _stereo_cameras()
    g = torch.Generator().manual_seed(0)
    points = torch.randn(50, 3, generator=g, dtype=torch.float64) * 0.5
    points[:, 2] += 3.0
    uv_a, _, _ = project(points, cam_a)
    uv_b, _, _ = project(points, cam_b)
    assert float(sampson_distance(uv_a, uv_b, cam_a, cam_b).max()) < 1e-8


def test_sampson_matches_algebraic_oracle():
    """Test Sampson distance against the explicit formula."""
    cam_a, cam_b = _stereo_cameras()
    rng = np.random.default_rng(0)
    pa = rng.uniform(0, 32, size=(40, 2))
    pb = rng.uniform(0, 24, size=(40, 2))

    R_a, R_b = cam_a.rotation().numpy(), cam_b.rotation().numpy()
    R_ab = R_b @ R_a.T
    t_ab = cam_b.t.numpy() - R_ab @ cam_a.t.numpy()
    tx = np.array([[0, -t_ab[2], t_ab[1]], [t_ab[2], 0, -t_ab[0]], [-t_ab[1], t_ab[0], 0]])
    F = np.linalg.inv(cam_b.intrinsics().numpy()).T @ tx @ R_ab @ np.linalg.inv(cam_a.intrinsics().numpy())
    expected = []
    for a, b in zip(pa, pb):
        xa, xb = np.append(a, 1.0), np.append(b, 1.0)
        Fa, Fb = F @ xa, F.T @ xb
        expected.append((xb @ F @ xa) ** 2 / (Fa[0] ** 2 + Fa[1] ** 2 + Fb[0] ** 2 + Fb[1] ** 2))

    actual = sampson_distance(torch.from_numpy(pa), torch.from_numpy(pb), cam_a, cam_b)
    np.testing.assert_allclose(actual.numpy(), np.array(expected), rtol=1e-9, atol=1e-12)


def test_sampson_rejects_pure_rotation():
    """Test Sampson distance for a zero-baseline pair."""
    cam_a, cam_b = _stereo_cameras()
    rotated = Camera(q=cam_b.q, t=torch.zeros(3, dtype=torch.float64), f=cam_b.f, width=32, height=24)
    with pytest.raises(DegenerateGeometryError):
        sampson_distance(torch.zeros(1, 2, dtype=torch.float64), torch.zeros(1, 2, dtype=torch.float64),
                         cam_a, rotated)


def test_camera_centers_invert_extrinsics():
    """Test camera centers from extrinsics."""
    g = torch.Generator().manual_seed(9)
    cams = random_cameras(5, g)
    centers = camera_centers(cams)
    R = quat_to_rotmat(cams[:, :4])
    # a camera's own center maps to its origin
    mapped = torch.einsum("nij,nj->ni", R, centers) + cams[:, 4:7]
    assert float(mapped.abs().max()) < 1e-12
    assert math.isfinite(float(centers.sum()))
