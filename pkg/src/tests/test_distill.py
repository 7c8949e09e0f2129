"""
Tests for augmentations, the EMA update and the self-distillation step.
"""

from dataclasses import replace

import pytest
import torch

from src.config.experiment import AugmentationSpec
from src.errors import ShapeError
from src.geometry.scene import SceneBundle
from src.models.recon.model import HEAD_PREFIXES, build_model
from src.training.augment import AugmentRecord, apply_mask, augment, rotate_bundle
from src.training.distill import TeacherState, distill_step, ema_update
from src.training.engine import ParamStore


def _bundle(num_frames=3, height=80, width=80, seed=0):
    g = torch.Generator().manual_seed(seed)
    cameras = torch.zeros(num_frames, 9, dtype=torch.float64)
    cameras[:, 0] = 1.0
    cameras[:, 4] = torch.arange(num_frames, dtype=torch.float64) * 0.1
    cameras[:, 7:] = 1.0
    return SceneBundle(
        images=torch.rand(num_frames, 3, height, width, generator=g, dtype=torch.float64),
        cameras=cameras,
        depths=1.0 + torch.rand(num_frames, height, width, generator=g, dtype=torch.float64),
        name="augment",
    )


def _params_distance(a, b):
    return torch.sqrt(sum(((x - y) ** 2).sum() for x, y in zip(a.parameters(), b.parameters())))


def test_identity_spec_leaves_bundle_unchanged():
    """Test that a no-op augmentation returns the same bundle."""
    bundle = _bundle()
    out, record = augment(bundle, AugmentationSpec.identity(), torch.Generator().manual_seed(0))
    assert torch.equal(out.images, bundle.images)
    assert torch.equal(out.depths, bundle.depths)
    assert torch.equal(out.cameras, bundle.cameras)
    assert torch.equal(out.valid, bundle.valid)
    assert record.permutation == [0, 1, 2]
    assert record.masks == []


def test_permutation_restores_original_order():
    """Test frame permutation and its inverse."""
    bundle = _bundle()
    permuted = bundle.subset([2, 0, 1])
    record = AugmentRecord(permutation=[2, 0, 1])
    assert torch.equal(record.restore_order(permuted.images), bundle.images)
    assert record.inverse == [1, 2, 0]


def test_mask_rectangle_pixel_set():
    """Test the masked rectangle covers the expected pixels."""
    bundle = _bundle()
    masked = apply_mask(bundle, 1, 8, 8, 40, 72)
    inside = torch.zeros(80, 80, dtype=torch.bool)
    inside[8:40, 8:72] = True

    assert bool((masked.images[1][:, inside] == 0).all())
    assert not bool(masked.valid[1][inside].any())
    assert torch.equal(masked.images[1][:, ~inside], bundle.images[1][:, ~inside])
    assert torch.equal(masked.valid[1][~inside], bundle.valid[1][~inside])
    assert torch.equal(masked.images[[0, 2]], bundle.images[[0, 2]])
    assert torch.equal(masked.depths, bundle.depths)


def test_rotation_drops_cameras_and_turns_maps():
    """Test quarter-turn rotation of images and depth maps."""
    bundle = _bundle(height=80, width=80)
    rotated = rotate_bundle(bundle, 1)
    assert rotated.cameras is None
    assert torch.equal(rotated.depths[0], torch.rot90(bundle.depths[0], 1, dims=(0, 1)))
    assert rotate_bundle(bundle, 4) is bundle


def test_non_square_frames_only_use_half_turns():
    """Test rotations on non-square frames."""
    bundle = _bundle(height=40, width=80)
    spec = replace(AugmentationSpec.identity(), rotate=True)
    for seed in range(20):
        out, record = augment(bundle, spec, torch.Generator().manual_seed(seed))
        assert record.rotation in (0, 2)
        assert tuple(out.images.shape[-2:]) == (40, 80)


def test_augment_is_deterministic_and_stays_in_range():
    """Test augmentation determinism and value range."""
    bundle = _bundle()
    spec = AugmentationSpec()
    a, record_a = augment(bundle, spec, torch.Generator().manual_seed(7))
    b, record_b = augment(bundle, spec, torch.Generator().manual_seed(7))
    assert torch.equal(a.images, b.images)
    assert record_a == record_b
    assert float(a.images.min()) >= -1e-6
    assert float(a.images.max()) <= 1.0 + 1e-6


def test_reference_can_be_pinned():
    """Test keeping frame 0 in place under permutation."""
    spec = replace(AugmentationSpec.identity(), permute=True, permute_reference=False)
    for seed in range(10):
        _, record = augment(_bundle(num_frames=4), spec, torch.Generator().manual_seed(seed))
        assert record.permutation[0] == 0
        assert sorted(record.permutation) == [0, 1, 2, 3]


def test_ema_with_unit_decay_keeps_teacher(tiny_config):
    """Test EMA update with decay 1."""
    teacher = build_model(tiny_config, seed=0)
    before = {k: v.clone() for k, v in teacher.state_dict().items()}
    ema_update(teacher, build_model(tiny_config, seed=1), decay=1.0)
    assert all(torch.equal(before[k], v) for k, v in teacher.state_dict().items())


def test_ema_with_zero_decay_copies_student(tiny_config):
    """Test EMA update with decay 0."""
    teacher = build_model(tiny_config, seed=0)
    student = build_model(tiny_config, seed=1)
    ema_update(teacher, student, decay=0.0)
    assert all(torch.equal(t, s) for t, s in zip(teacher.parameters(), student.parameters()))


def test_ema_contracts_geometrically(tiny_config):
    """Test repeated EMA updates toward a fixed student."""
    teacher = build_model(tiny_config, seed=0, dtype=torch.float64)
    student = build_model(tiny_config, seed=1, dtype=torch.float64)
    m, k = 0.9, 12
    start = _params_distance(teacher, student)
    for _ in range(k):
        ema_update(teacher, student, decay=m)
    assert float(_params_distance(teacher, student) / start) == pytest.approx(m ** k, rel=1e-10)


def test_ema_rejects_mismatched_models(tiny_config):
    """Test EMA update between different architectures."""
    other = replace(tiny_config, num_blocks=3)
    with pytest.raises(ShapeError):
        ema_update(build_model(tiny_config), build_model(other), decay=0.5)


def _student(config):
    student = build_model(config, seed=0, dtype=torch.float64)
    store = ParamStore(student)
    store.freeze(HEAD_PREFIXES)
    return store, TeacherState.from_student(student, decay=0.99)


def test_distill_self_consistency(tiny_config):
    """Test distillation loss when teacher equals student."""
    store, teacher = _student(tiny_config)
    bundle = _bundle(height=32, width=32)
    result = distill_step(store, teacher, bundle, AugmentationSpec(), seeds=(5, 5))
    assert float(result.feature) == 0.0
    assert float(result.camera) == 0.0
    assert float(result.depth) == 0.0


def test_distill_permutation_only_has_no_feature_loss(tiny_config):
    """Test permutation-only distillation."""
    store, teacher = _student(tiny_config)
    bundle = _bundle(num_frames=4, height=32, width=32)
    spec = replace(AugmentationSpec.identity(), permute=True, permute_reference=False)
    result = distill_step(store, teacher, bundle, spec, seeds=(1, 2))
    assert float(result.feature) < 1e-18
    assert float(result.camera) < 1e-9
    assert float(result.depth) < 1e-9


def test_distill_fills_trunk_gradients_only(tiny_config):
    """Test that distillation leaves head gradients empty."""
    store, teacher = _student(tiny_config)
    unlabeled = replace(_bundle(height=32, width=32), cameras=None, depths=None, valid=None)
    result = distill_step(store, teacher, unlabeled, AugmentationSpec(), seeds=(3, 4))
    assert float(result.total) > 0
    for name, grad in result.grads.items():
        if name.startswith(HEAD_PREFIXES):
            assert float(grad.abs().sum()) == 0.0
    assert any(float(g.abs().sum()) > 0 for name, g in result.grads.items() if name.startswith("aggregator."))
