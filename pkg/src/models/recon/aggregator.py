"""
Alternating-attention trunk.

Every block runs a frame-attention layer followed by a global layer. In the
blocks returned by ModelConfig.register_block_indices() the global layer is
register attention instead. The outputs of the blocks listed by
ModelConfig.tap_indices() are handed to the heads.
"""

import logging
from typing import List, Optional, Tuple

import torch
from torch import nn

from src.config.experiment import ModelConfig
from src.models.recon.attention import (
    AttentionBlock,
    frame_attention,
    global_attention,
    register_attention,
)
from src.models.recon.tokens import Tokenizer, TokenState

logger = logging.getLogger(__name__)


class TrunkBlock(nn.Module):
    def __init__(self, config: ModelConfig, uses_registers: bool):
        super().__init__()
        self.uses_registers = uses_registers
        self.frame = AttentionBlock(config.hidden_dim, config.num_heads, config.mlp_ratio)
        self.cross = AttentionBlock(config.hidden_dim, config.num_heads, config.mlp_ratio)

    @property
    def kind(self) -> str:
        return "register" if self.uses_registers else "global"

    def forward(self, state: TokenState) -> TokenState:
        state = frame_attention(state, self.frame)
        if self.uses_registers:
            return register_attention(state, self.cross)
        return global_attention(state, self.cross)


class Aggregator(nn.Module):
    """Tokenizer plus the stack of trunk blocks."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.check()
        self.config = config
        self.tokenizer = Tokenizer(config)
        register_blocks = set(config.register_block_indices())
        self.blocks = nn.ModuleList(
            TrunkBlock(config, uses_registers=k in register_blocks) for k in range(config.num_blocks)
        )
        logger.debug(
            f"Trunk with {config.num_blocks} blocks, register attention at {sorted(register_blocks)}"
        )

    def forward(self, images: torch.Tensor,
                is_reference: Optional[torch.Tensor] = None) -> Tuple[TokenState, List[TokenState]]:
        return run_trunk(self.tokenizer(images, is_reference), self)


def run_trunk(state: TokenState, aggregator: Aggregator) -> Tuple[TokenState, List[TokenState]]:
    """Run every trunk block and collect the tapped intermediate states.

    Returns:
        (final state, taps) where taps follow ModelConfig.tap_indices().
    """
    taps_at = aggregator.config.tap_indices()
    outputs = []
    for block in aggregator.blocks:
        state = block(state)
        outputs.append(state)
    return state, [outputs[k] for k in taps_at]
