"""
Parameter store, gradient contract and optimizer step.

Gradients are computed with torch.autograd and kept in ParamStore.grads, one
tensor per parameter with the parameter's shape. Frozen parameters always
report an all-zero gradient and are never updated.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Tuple

import torch
from torch import nn

from src.config.experiment import Schedule
from src.errors import EngineError, NonFiniteGradientError

logger = logging.getLogger(__name__)


class ParamStore:
    """Named parameters of a module with one gradient slot each."""

    def __init__(self, module: nn.Module):
        self.module = module
        self.grads: Dict[str, torch.Tensor] = {
            name: torch.zeros_like(p) for name, p in module.named_parameters()
        }

    def named_parameters(self) -> Iterator[Tuple[str, nn.Parameter]]:
        return self.module.named_parameters()

    def parameter(self, name: str) -> nn.Parameter:
        return dict(self.module.named_parameters())[name]

    def freeze(self, prefixes: Iterable[str]) -> List[str]:
        """Mark every parameter whose name starts with one of `prefixes` as frozen."""
        prefixes = tuple(prefixes)
        frozen = []
        for name, p in self.module.named_parameters():
            if name.startswith(prefixes):
                p.requires_grad_(False)
                p.grad = None
                self.grads[name].zero_()
                frozen.append(name)
        logger.info(f"Froze {len(frozen)} parameter tensors under {list(prefixes)}")
        return frozen

    def trainable(self) -> List[Tuple[str, nn.Parameter]]:
        return [(name, p) for name, p in self.module.named_parameters() if p.requires_grad]

    def zero_grad(self) -> None:
        for name, p in self.module.named_parameters():
            self.grads[name].zero_()
            p.grad = None

    def snapshot(self) -> Dict[str, torch.Tensor]:
        return {name: p.detach().clone() for name, p in self.module.named_parameters()}

    def grad_norm(self) -> float:
        norms = [g.norm() for g in self.grads.values()]
        return float(torch.linalg.vector_norm(torch.stack(norms))) if norms else 0.0


def backward(loss: torch.Tensor, store: ParamStore) -> Dict[str, torch.Tensor]:
    """Exact gradients of a scalar loss w.r.t. every trainable parameter.

    Parameters the loss does not depend on get an exact zero gradient.

    Raises:
        EngineError: if the loss is not a scalar tensor attached to the graph.
    """
    if not isinstance(loss, torch.Tensor) or loss.numel() != 1:
        raise EngineError(f"loss must be a scalar tensor, got {type(loss).__name__} "
                          f"with shape {tuple(getattr(loss, 'shape', ()))}")
    if not loss.requires_grad:
        raise EngineError("loss is detached from the parameters")

    store.zero_grad()
    trainable = store.trainable()
    if not trainable:
        return store.grads
    grads = torch.autograd.grad(loss.reshape(()), [p for _, p in trainable], allow_unused=True)
    for (name, p), grad in zip(trainable, grads):
        if grad is not None:
            store.grads[name].copy_(grad)
        p.grad = store.grads[name]
    return store.grads


def clip_gradients(store: ParamStore, max_norm: float) -> float:
    """Scale trainable gradients to global norm <= max_norm; returns the norm before clipping."""
    params = [p for _, p in store.trainable() if p.grad is not None]
    if not params:
        return 0.0
    return float(torch.nn.utils.clip_grad_norm_(params, max_norm))


def check_finite(store: ParamStore) -> None:
    bad = [name for name, g in store.grads.items() if not bool(torch.isfinite(g).all())]
    if bad:
        raise NonFiniteGradientError(f"non-finite gradient in {len(bad)} tensors, first: {bad[:5]}")


def build_optimizer(store: ParamStore, schedule: Schedule) -> torch.optim.AdamW:
    """AdamW over every parameter; frozen ones carry no gradient and are skipped."""
    return torch.optim.AdamW(
        [p for _, p in store.named_parameters()],
        lr=0.0,
        betas=(schedule.beta1, schedule.beta2),
        eps=schedule.eps,
        weight_decay=schedule.weight_decay,
    )


@dataclass
class StepStats:
    step: int
    lr: float
    grad_norm: float


def optimizer_step(store: ParamStore, optimizer: torch.optim.Optimizer, schedule: Schedule,
                   step: int) -> StepStats:
    """Check, clip and apply the populated gradients at the scheduled learning rate.

    Raises:
        NonFiniteGradientError: if any gradient holds NaN or inf; parameters are left untouched.
    """
    check_finite(store)
    norm = clip_gradients(store, schedule.clip_norm)
    lr = schedule.lr(step)
    for group in optimizer.param_groups:
        group["lr"] = lr
    optimizer.step()
    return StepStats(step=step, lr=lr, grad_norm=norm)
