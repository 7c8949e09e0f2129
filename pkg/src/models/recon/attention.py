"""
Pre-norm transformer blocks and the three ways the trunk applies them.

- frame attention: each frame attends over its own tokens only
- global attention: all tokens of all frames attend jointly
- register attention: only the registers of all frames attend jointly; the
  block (attention and MLP) never touches image or camera tokens

No frame-index embedding exists anywhere, so global and register attention are
equivariant to frame permutations.
"""

import math
from typing import Tuple

import torch
import torch.nn.functional as F
from torch import nn

from src.models.recon.tokens import TokenState


class AttentionBlock(nn.Module):
    """Multi-head self-attention with QKNorm followed by an MLP, both pre-norm residual."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: int = 4):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.norm1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        # per-head temperature on cosine logits
        self.logit_scale = nn.Parameter(torch.full((num_heads,), math.sqrt(self.head_dim)))
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, mlp_ratio * dim),
            nn.GELU(),
            nn.Linear(mlp_ratio * dim, dim),
        )

    def qkv_heads(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Normalized queries, keys and raw values, each (B, heads, T, head_dim)."""
        b, t, c = x.shape
        qkv = self.qkv(self.norm1(x)).reshape(b, t, 3, self.num_heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4).unbind(0)
        return F.normalize(q, dim=-1), F.normalize(k, dim=-1), v

    def attend(self, x: torch.Tensor) -> torch.Tensor:
        """Attention sub-layer output (before the residual add)."""
        b, t, c = x.shape
        q, k, v = self.qkv_heads(x)
        scores = torch.matmul(q, k.transpose(-2, -1)) * self.logit_scale.view(1, -1, 1, 1)
        weights = scores.softmax(dim=-1)
        out = torch.matmul(weights, v).transpose(1, 2).reshape(b, t, c)
        return self.proj(out)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attend(x)
        return x + self.mlp(self.norm2(x))


def frame_attention(state: TokenState, block: AttentionBlock) -> TokenState:
    """Apply `block` to every frame independently; frames are the batch dimension."""
    return state.with_tokens(block(state.tokens))


def global_attention(state: TokenState, block: AttentionBlock) -> TokenState:
    """Apply `block` once over the concatenation of all frames' tokens."""
    n, t, c = state.tokens.shape
    out = block(state.tokens.reshape(1, n * t, c))
    return state.with_tokens(out.reshape(n, t, c))


def register_attention(state: TokenState, block: AttentionBlock) -> TokenState:
    """Apply `block` over the N*R registers only; other tokens are passed through unchanged."""
    n, _, c = state.tokens.shape
    r = state.num_registers
    if r == 0:
        return state
    head = state.tokens[:, :state.num_patches + 1]
    registers = block(state.register_tokens.reshape(1, n * r, c)).reshape(n, r, c)
    return state.with_tokens(torch.cat([head, registers], dim=1))
