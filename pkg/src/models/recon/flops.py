"""
Analytic FLOP and activation-memory accounting for the trunk.

Only matrix multiplications are counted (2 FLOPs per multiply-add): the QKV and
output projections, the two attention matmuls and the MLP. Norms, softmax and
residual adds are ignored, which is also what torch's FlopCounterMode counts,
so the analytic total can be checked against an instrumented forward pass.
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional

import torch
from torch.utils.flop_counter import FlopCounterMode

from src.config.experiment import ModelConfig
from src.models.recon.aggregator import Aggregator, run_trunk
from src.models.recon.tokens import TokenState

BYTES_PER_ELEMENT = 4


def attention_layer_flops(num_tokens: int, dim: int, mlp_ratio: int = 4) -> int:
    """FLOPs of one pre-norm attention + MLP block over `num_tokens` tokens."""
    t, c = num_tokens, dim
    projections = 2 * t * c * (3 * c) + 2 * t * c * c
    attention = 2 * (2 * t * t * c)
    mlp = 2 * (2 * t * c * mlp_ratio * c)
    return projections + attention + mlp


def attention_layer_activations(num_tokens: int, dim: int, num_heads: int, mlp_ratio: int = 4) -> int:
    """Activation bytes one block keeps for the backward pass (float32 estimate)."""
    t, c = num_tokens, dim
    per_token = c * (2 + 3 + 1 + 2 * mlp_ratio)
    scores = 2 * num_heads * t * t
    return BYTES_PER_ELEMENT * (t * per_token + scores)


@dataclass
class FlopsReport:
    num_frames: int
    image_tokens: int
    num_registers: int
    num_blocks: int
    hidden_dim: int
    register_attention_ratio: float
    register_blocks: int
    frame_flops: int
    global_flops: int
    register_flops: int
    backbone_flops: int
    baseline_flops: int
    activation_bytes: int
    baseline_activation_bytes: int

    @property
    def saving(self) -> float:
        """Fraction of baseline backbone FLOPs removed by the register schedule."""
        return 1.0 - self.backbone_flops / self.baseline_flops

    @property
    def fraction_of_baseline(self) -> float:
        return self.backbone_flops / self.baseline_flops

    @property
    def memory_saving(self) -> float:
        return 1.0 - self.activation_bytes / self.baseline_activation_bytes

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.update(
            saving=self.saving,
            fraction_of_baseline=self.fraction_of_baseline,
            memory_saving=self.memory_saving,
        )
        return data

    def format_table(self) -> str:
        rows = [
            ("frames", f"{self.num_frames}"),
            ("image tokens / frame", f"{self.image_tokens}"),
            ("registers / frame", f"{self.num_registers}"),
            ("blocks (register)", f"{self.num_blocks} ({self.register_blocks})"),
            ("hidden dim", f"{self.hidden_dim}"),
            ("frame attention GFLOPs", f"{self.frame_flops / 1e9:.3f}"),
            ("global attention GFLOPs", f"{self.global_flops / 1e9:.3f}"),
            ("register attention GFLOPs", f"{self.register_flops / 1e9:.3f}"),
            ("backbone GFLOPs", f"{self.backbone_flops / 1e9:.3f}"),
            ("all-global GFLOPs", f"{self.baseline_flops / 1e9:.3f}"),
            ("FLOP saving", f"{100 * self.saving:.2f}%"),
            ("activation MiB", f"{self.activation_bytes / 2**20:.1f}"),
            ("all-global activation MiB", f"{self.baseline_activation_bytes / 2**20:.1f}"),
            ("memory saving", f"{100 * self.memory_saving:.2f}%"),
        ]
        width = max(len(label) for label, _ in rows)
        return "\n".join(f"{label.ljust(width)}  {value}" for label, value in rows)


def flops_report(config: ModelConfig, num_frames: int, image_tokens: Optional[int] = None) -> FlopsReport:
    """Backbone cost of `config` on `num_frames` frames.

    Args:
        config: Trunk sizes and register schedule.
        num_frames: Frames per forward pass.
        image_tokens: Image tokens per frame; defaults to the config's patch grid.
    """
    p = config.num_patches if image_tokens is None else image_tokens
    n, r, c, m = num_frames, config.num_registers, config.hidden_dim, config.mlp_ratio
    per_frame = p + 1 + r
    register_blocks = len(config.register_block_indices())
    global_blocks = config.num_blocks - register_blocks

    frame_layer = n * attention_layer_flops(per_frame, c, m)
    global_layer = attention_layer_flops(n * per_frame, c, m)
    register_layer = attention_layer_flops(n * r, c, m) if r else 0

    frame_mem = n * attention_layer_activations(per_frame, c, config.num_heads, m)
    global_mem = attention_layer_activations(n * per_frame, c, config.num_heads, m)
    register_mem = attention_layer_activations(n * r, c, config.num_heads, m) if r else 0

    frame_total = config.num_blocks * frame_layer
    global_total = global_blocks * global_layer
    register_total = register_blocks * register_layer
    return FlopsReport(
        num_frames=n,
        image_tokens=p,
        num_registers=r,
        num_blocks=config.num_blocks,
        hidden_dim=c,
        register_attention_ratio=config.register_attention_ratio,
        register_blocks=register_blocks,
        frame_flops=frame_total,
        global_flops=global_total,
        register_flops=register_total,
        backbone_flops=frame_total + global_total + register_total,
        baseline_flops=config.num_blocks * (frame_layer + global_layer),
        activation_bytes=config.num_blocks * frame_mem + global_blocks * global_mem + register_blocks * register_mem,
        baseline_activation_bytes=config.num_blocks * (frame_mem + global_mem),
    )


def count_trunk_flops(aggregator: Aggregator, state: TokenState) -> int:
    """Matmul FLOPs of one trunk pass measured with torch's FlopCounterMode."""
    counter = FlopCounterMode(display=False)
    with torch.no_grad(), counter:
        run_trunk(state, aggregator)
    return counter.get_total_flops()
