"""
Tests for the bundle and checkpoint containers.
"""

import json

import pytest
import torch

from src.errors import BundleFormatError
from src.models.recon.model import build_model
from src.pipeline.synthetic import make_synthetic
from src.storage.blobs import read_manifest
from src.storage.bundle_io import list_bundles, load_bundle, save_bundle
from src.storage.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint


def _directory_bytes(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_float32_bundle_roundtrip_is_bit_exact(tmp_path):
    """Test saving and loading a float32 bundle."""
    bundle = make_synthetic("dynamic-translating-object", seed=1)
    save_bundle(bundle, tmp_path / "seq")
    loaded = load_bundle(tmp_path / "seq")

    assert loaded.name == bundle.name
    assert torch.equal(loaded.images, bundle.images)
    assert torch.equal(loaded.cameras, bundle.cameras)
    assert torch.equal(loaded.depths, bundle.depths)
    assert torch.equal(loaded.valid, bundle.valid)
    assert torch.equal(loaded.dynamic, bundle.dynamic)
    assert loaded.confidence is None
    assert loaded.metadata == bundle.metadata


def test_manifest_is_sorted_json(tmp_path):
    """Test manifest formatting."""
    save_bundle(make_synthetic("plane", seed=0), tmp_path)
    text = (tmp_path / "manifest.json").read_text()
    manifest = json.loads(text)
    assert text == json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    assert manifest["format"] == "scene-bundle/1"
    assert len(manifest["cameras"]) == manifest["num_frames"]


def test_same_seed_gives_byte_identical_bundles(tmp_path):
    """Test bundle file determinism."""
    save_bundle(make_synthetic("orbit", seed=4), tmp_path / "a")
    save_bundle(make_synthetic("orbit", seed=4), tmp_path / "b")
    assert _directory_bytes(tmp_path / "a") == _directory_bytes(tmp_path / "b")


def test_unlabeled_bundle_roundtrip(tmp_path):
    """Test saving and loading an unlabeled bundle."""
    bundle = make_synthetic("plane", seed=0)
    bundle.cameras = None
    bundle.depths = None
    bundle.valid = None
    save_bundle(bundle, tmp_path)
    loaded = load_bundle(tmp_path)
    assert not loaded.is_labeled
    assert torch.equal(loaded.images, bundle.images)


def test_missing_manifest(tmp_path):
    """Test loading a bundle without a manifest."""
    with pytest.raises(BundleFormatError):
        load_bundle(tmp_path)


def test_truncated_blob_detected(tmp_path):
    """Test loading a truncated blob."""
    save_bundle(make_synthetic("plane", seed=0), tmp_path)
    blob = tmp_path / "depth_0.f32"
    blob.write_bytes(blob.read_bytes()[:-4])
    with pytest.raises(BundleFormatError):
        load_bundle(tmp_path)


def test_wrong_format_tag(tmp_path):
    """Test loading a manifest with a wrong format tag."""
    save_bundle(make_synthetic("plane", seed=0), tmp_path)
    manifest = read_manifest(tmp_path)
    manifest["format"] = "something-else"
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(BundleFormatError):
        load_bundle(tmp_path)


def test_list_bundles(tmp_path):
    """Test listing bundles under a directory."""
    save_bundle(make_synthetic("plane", seed=0), tmp_path / "b")
    save_bundle(make_synthetic("plane", seed=1), tmp_path / "a")
    (tmp_path / "notes").mkdir()
    assert [p.name for p in list_bundles(tmp_path)] == ["a", "b"]
    assert list_bundles(tmp_path / "a") == [tmp_path / "a"]


def test_checkpoint_roundtrip(tmp_path, tiny_config):
    """Test saving and loading a checkpoint."""
    model = build_model(tiny_config, seed=0)
    save_checkpoint(model, tmp_path, step=7, config={"note": "tiny"})

    other = build_model(tiny_config, seed=1)
    manifest = load_checkpoint(other, tmp_path)
    assert manifest["step"] == 7
    for (name, a), (_, b) in zip(model.state_dict().items(), other.state_dict().items()):
        assert torch.equal(a, b), name


def test_checkpoint_shape_mismatch(tmp_path, tiny_config):
    """Test loading a checkpoint into a different model."""
    save_checkpoint(build_model(tiny_config, seed=0), tmp_path, step=0)
    state, _ = read_checkpoint(tmp_path)
    assert state

    from dataclasses import replace
    wider = replace(tiny_config, hidden_dim=48, num_heads=2)
    with pytest.raises(BundleFormatError):
        load_checkpoint(build_model(wider, seed=0), tmp_path)
