"""
Shared fixtures for the test suite.
"""

import pytest
import torch

from src.config.experiment import ModelConfig
from src.pipeline.synthetic import make_synthetic


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def single_thread():
    """Single-threaded kernels keep bit-exact comparisons stable."""
    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    yield
    torch.set_num_threads(threads)


@pytest.fixture
def tiny_config():
    """Two blocks, 32 channels, 8x8 token grid at patch size 4."""
    return ModelConfig(
        num_blocks=2,
        hidden_dim=32,
        num_heads=2,
        patch_size=4,
        num_registers=4,
        register_attention_ratio=0.5,
        image_height=32,
        image_width=32,
        depth_upsample=2,
        camera_head_blocks=2,
        num_taps=2,
    )


@pytest.fixture
def plane_bundle():
    return make_synthetic("plane", seed=0).to(torch.float64)


@pytest.fixture
def orbit_bundle():
    return make_synthetic("orbit", seed=0).to(torch.float64)

