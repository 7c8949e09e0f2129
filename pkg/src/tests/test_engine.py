"""
Tests for the gradient contract, clipping, the optimizer step and the schedule.
"""

from dataclasses import replace

import pytest
import torch
from torch import nn

from src.config.experiment import LossWeights, PairConfig, Schedule
from src.errors import EngineError, NonFiniteGradientError
from src.geometry.scene import bundle_points
from src.models.recon.model import HEAD_PREFIXES, build_model
from src.pipeline.synthetic import make_synthetic
from src.training.engine import ParamStore, backward, build_optimizer, clip_gradients, optimizer_step
from src.training.losses import supervised_losses
from src.training.pairs import build_pairs


class Vector(nn.Module):
    def __init__(self, values):
        super().__init__()
        self.p = nn.Parameter(torch.tensor(values, dtype=torch.float64))
        self.unused = nn.Parameter(torch.ones(2, dtype=torch.float64))


def test_quadratic_gradient_is_the_parameter():
    """Test gradient of a quadratic loss."""
    module = Vector([1.0, -2.0, 3.0])
    store = ParamStore(module)
    grads = backward(0.5 * (module.p ** 2).sum(), store)
    assert torch.equal(grads["p"], module.p.detach())


def test_unused_parameter_gets_exact_zero():
    """Test gradient of a parameter the loss never uses."""
    module = Vector([1.0, 2.0])
    store = ParamStore(module)
    grads = backward(module.p.sum() + 3.0, store)
    assert torch.equal(grads["unused"], torch.zeros(2, dtype=torch.float64))
    assert torch.equal(grads["p"], torch.ones(2, dtype=torch.float64))


def test_detached_loss_rejected():
    """Test backward on a loss without a graph."""
    module = Vector([1.0])
    with pytest.raises(EngineError):
        backward(module.p.detach().sum(), ParamStore(module))


def test_non_scalar_loss_rejected():
    """Test backward on a non-scalar loss."""
    module = Vector([1.0, 2.0])
    with pytest.raises(EngineError):
        backward(module.p * 2.0, ParamStore(module))


def test_clipping_scales_to_threshold():
    """Test gradient clipping above the threshold."""
    module = Vector([0.0, 0.0])
    store = ParamStore(module)
    backward((module.p * torch.tensor([6.0, 8.0], dtype=torch.float64)).sum(), store)
    norm = clip_gradients(store, 1.0)
    assert norm == pytest.approx(10.0)
    assert torch.allclose(store.grads["p"], torch.tensor([0.6, 0.8], dtype=torch.float64), rtol=1e-6)


def test_clipping_is_identity_below_threshold():
    """Test gradient clipping below the threshold."""
    module = Vector([0.0, 0.0])
    store = ParamStore(module)
    backward((module.p * torch.tensor([0.3, 0.4], dtype=torch.float64)).sum(), store)
    clip_gradients(store, 1.0)
    assert torch.equal(store.grads["p"], torch.tensor([0.3, 0.4], dtype=torch.float64))


def test_zero_gradient_without_decay_leaves_parameters():
    """Test an optimizer step with zero gradients."""
    module = Vector([1.0, 2.0])
    store = ParamStore(module)
    schedule = Schedule(weight_decay=0.0)
    optimizer = build_optimizer(store, schedule)
    backward(0.0 * module.p.sum(), store)
    optimizer_step(store, optimizer, schedule, step=10)
    assert torch.equal(module.p.detach(), torch.tensor([1.0, 2.0], dtype=torch.float64))


def test_nan_gradient_aborts_before_update():
    """Test that a NaN gradient stops the step."""
    module = Vector([1.0, 2.0])
    store = ParamStore(module)
    schedule = Schedule()
    optimizer = build_optimizer(store, schedule)
    backward((module.p * float("nan")).sum(), store)
    with pytest.raises(NonFiniteGradientError):
        optimizer_step(store, optimizer, schedule, step=10)
    assert torch.equal(module.p.detach(), torch.tensor([1.0, 2.0], dtype=torch.float64))


def test_frozen_parameters_report_zero_and_stay_put(tiny_config):
    """Test frozen parameters through a full step."""
    model = build_model(tiny_config, seed=0, dtype=torch.float64)
    store = ParamStore(model)
    frozen = store.freeze(HEAD_PREFIXES)
    assert frozen and all(name.startswith(HEAD_PREFIXES) for name in frozen)
    before = store.snapshot()

    schedule = Schedule(total_steps=10)
    optimizer = build_optimizer(store, schedule)
    output = model(torch.rand(2, 3, 32, 32, dtype=torch.float64))
    backward(output.depth.depth.mean() + output.camera.encoding.sum(), store)
    optimizer_step(store, optimizer, schedule, step=5)

    for name in frozen:
        assert float(store.grads[name].abs().sum()) == 0.0
        assert torch.equal(store.parameter(name).detach(), before[name])
    assert any(not torch.equal(p.detach(), before[n]) for n, p in model.named_parameters() if n not in frozen)


def test_schedule_warmup_and_decay():
    """Test learning rate warm-up and cosine decay."""
    schedule = Schedule(peak_lr=1e-3, warmup_fraction=0.1, total_steps=100)
    assert schedule.lr(0) == 0.0
    assert schedule.lr(5) == pytest.approx(5e-4)
    assert schedule.lr(10) == pytest.approx(1e-3)
    assert schedule.lr(100) == 0.0
    rates = [schedule.lr(s) for s in range(10, 101)]
    assert all(a >= b for a, b in zip(rates, rates[1:]))


def _gradient_problem(tiny_config):
    bundle = make_synthetic("plane", seed=0, size=(32, 32)).to(torch.float64)
    # keep residuals away from the kinks of the l1 terms
    cameras = bundle.cameras.clone()
    cameras[:, 4:7] += torch.tensor([0.5, -0.7, 0.3], dtype=torch.float64)
    depths = 3.0 * bundle.depths
    labeled = replace(bundle, cameras=cameras, depths=depths)
    pairs = build_pairs(bundle, tiny_config.patch_size, PairConfig(), torch.Generator().manual_seed(0))
    return labeled, bundle_points(labeled), pairs


def test_gradients_match_finite_differences(tiny_config):
    """Test autograd gradients against finite differences."""
    model = build_model(tiny_config, seed=0, dtype=torch.float64)
    bundle, points, pairs = _gradient_problem(tiny_config)
    weights = LossWeights()

    def loss():
        output = model(bundle.images)
        return supervised_losses(output, bundle.cameras, bundle.depths, points, bundle.valid,
                                 weights, pairs).total

    store = ParamStore(model)
    backward(loss(), store)

    g = torch.Generator().manual_seed(0)
    worst = 0.0
    for name, p in model.named_parameters():
        grad = store.grads[name].reshape(-1)
        flat = p.data.reshape(-1)
        indices = {int(grad.abs().argmax()), int(torch.randint(0, flat.numel(), (), generator=g))}
        for i in indices:
            original = float(flat[i])
            h = 1e-5 * max(1.0, abs(original))
            with torch.no_grad():
                flat[i] = original + h
                plus = float(loss())
                flat[i] = original - h
                minus = float(loss())
                flat[i] = original
            numeric = (plus - minus) / (2.0 * h)
            analytic = float(grad[i])
            error = abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-5)
            worst = max(worst, error)
            assert error < 1e-3, f"{name}[{i}]: analytic {analytic}, numeric {numeric}"
    assert worst < 1e-3
