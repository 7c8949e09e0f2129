import pytest
import torch

from src.errors import ConfigError
from src.geometry.scene import bundle_points, mean_point_distance, unproject
from src.pipeline.synthetic import DEFAULT_FRAMES, KINDS, make_synthetic
from src.quality.consistency import multi_view_consistency
from src.quality.features import parallax_stat


@pytest.mark.parametrize("kind", KINDS)
def test_every_kind_is_a_normalized_bundle(kind):
    """Test every synthetic kind."""
    bundle = make_synthetic(kind, seed=1, size=(32, 48))
    assert bundle.num_frames == DEFAULT_FRAMES[kind]
    assert (bundle.height, bundle.width) == (32, 48)
    assert bundle.images.dtype == torch.float32
    assert bundle.images.min() >= 0.0 and bundle.images.max() <= 1.0
    assert bundle.valid.any()

    reference = bundle.cameras[0].double()
    assert torch.allclose(reference[:4], torch.tensor([1.0, 0.0, 0.0, 0.0], dtype=torch.float64), atol=1e-6)
    assert torch.allclose(reference[4:7], torch.zeros(3, dtype=torch.float64), atol=1e-6)

    points = bundle_points(bundle.to(torch.float64))
    assert float(mean_point_distance(points, bundle.valid)) == pytest.approx(1.0, abs=1e-5)


@pytest.mark.parametrize("kind", KINDS)
def test_same_seed_same_bundle(kind):
    """Test synthetic determinism."""
    a = make_synthetic(kind, seed=7)
    b = make_synthetic(kind, seed=7)
    assert torch.equal(a.images, b.images)
    assert torch.equal(a.cameras, b.cameras)
    assert torch.equal(a.depths, b.depths)


def test_different_seeds_differ():
    """Test synthetic scenes under different seeds."""
    assert not torch.equal(make_synthetic("plane", seed=0).images, make_synthetic("plane", seed=1).images)


def test_frame_count_override():
    """Test the frame count override."""
    assert make_synthetic("orbit", seed=0, num_frames=5).num_frames == 5


def test_unknown_kind():
    """Test an unknown synthetic kind."""
    with pytest.raises(ConfigError):
        make_synthetic("spiral")


def test_plane_depth_is_constant(plane_bundle):
    """Test the plane scene depth."""
    assert torch.allclose(plane_bundle.depths, plane_bundle.depths[0, 0, 0].expand_as(plane_bundle.depths))
    assert multi_view_consistency(plane_bundle).valid_fraction == 1.0


def test_orbit_misses_leave_invalid_pixels(orbit_bundle):
    """Test invalid pixels in the orbit scene."""
    assert not orbit_bundle.valid.all()
    assert bool((orbit_bundle.depths[~orbit_bundle.valid] == 0).all())


def test_orbit_has_wide_parallax(orbit_bundle):
    """Test orbit parallax."""
    points = bundle_points(orbit_bundle)[orbit_bundle.valid]
    assert parallax_stat(points, orbit_bundle.cameras, orbit_bundle.width, orbit_bundle.height) > 30.0


def test_dynamic_object_is_marked():
    """Test the dynamic-object mask."""
    bundle = make_synthetic("dynamic-translating-object", seed=2)
    assert bundle.dynamic is not None
    assert bundle.dynamic.any()
    assert bool(bundle.valid[bundle.dynamic].all())
    assert not torch.equal(bundle.dynamic[0], bundle.dynamic[-1])
    assert not bundle.static_valid().equal(bundle.valid)


def test_per_frame_unprojection_matches_bundle_points(orbit_bundle):
    """Test per-frame unprojection of a synthetic bundle."""
    frame = 3
    point_map = unproject(orbit_bundle.depth_map(frame), orbit_bundle.camera(frame))
    assert torch.allclose(point_map.points, bundle_points(orbit_bundle)[frame], atol=1e-12)
    assert torch.equal(point_map.valid, orbit_bundle.valid[frame])
