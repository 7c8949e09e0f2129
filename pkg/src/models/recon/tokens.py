"""
Patch tokenizer and the per-frame token layout.

Each frame contributes P = H'W' image tokens, one camera token and R register
tokens, in that order. Frames flagged as reference take the first of two
learnable camera/register initializations, all other frames the second.
"""

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import torch
from torch import nn

from src.config.experiment import ModelConfig
from src.errors import ShapeError


@dataclass
class TokenState:
    """Token tensor (N, P + 1 + R, C) plus the layout needed to slice it."""

    tokens: torch.Tensor
    num_patches: int
    num_registers: int
    grid: Tuple[int, int]

    @property
    def num_frames(self) -> int:
        return self.tokens.shape[0]

    @property
    def dim(self) -> int:
        return self.tokens.shape[-1]

    @property
    def image_tokens(self) -> torch.Tensor:
        return self.tokens[:, :self.num_patches]

    @property
    def camera_tokens(self) -> torch.Tensor:
        return self.tokens[:, self.num_patches]

    @property
    def register_tokens(self) -> torch.Tensor:
        return self.tokens[:, self.num_patches + 1:]

    @property
    def special_tokens(self) -> torch.Tensor:
        """Camera token followed by the registers, (N, 1 + R, C)."""
        return self.tokens[:, self.num_patches:]

    def with_tokens(self, tokens: torch.Tensor) -> "TokenState":
        if tokens.shape != self.tokens.shape:
            raise ShapeError(f"token shape changed from {tuple(self.tokens.shape)} to {tuple(tokens.shape)}")
        return replace(self, tokens=tokens)

    def permute_frames(self, order: Sequence[int]) -> "TokenState":
        index = torch.as_tensor(list(order), dtype=torch.long, device=self.tokens.device)
        return replace(self, tokens=self.tokens[index])


def sincos_position_encoding(grid_h: int, grid_w: int, dim: int) -> torch.Tensor:
    """Fixed 2-D sine/cosine encoding, (grid_h * grid_w, dim); half the channels per axis."""
    if dim % 4:
        raise ShapeError(f"positional encoding needs dim divisible by 4, got {dim}")
    quarter = dim // 4
    omega = 1.0 / (10000.0 ** (torch.arange(quarter, dtype=torch.float64) / quarter))
    ys, xs = torch.meshgrid(
        torch.arange(grid_h, dtype=torch.float64),
        torch.arange(grid_w, dtype=torch.float64),
        indexing="ij",
    )

    def encode(pos):
        angles = pos.reshape(-1, 1) * omega[None]
        return torch.cat([angles.sin(), angles.cos()], dim=1)

    return torch.cat([encode(ys), encode(xs)], dim=1).to(torch.float32)


class Tokenizer(nn.Module):
    """Linear patch embedding plus reference/non-reference special tokens."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c = config.hidden_dim
        self.patch_embed = nn.Conv2d(3, c, kernel_size=config.patch_size, stride=config.patch_size)
        # index 0: reference frame, 1: every other frame
        self.camera_token = nn.Parameter(torch.randn(2, 1, c) * 0.02)
        self.register_token = nn.Parameter(torch.randn(2, config.num_registers, c) * 0.02)
        grid_h, grid_w = config.grid_size
        self.register_buffer("position", sincos_position_encoding(grid_h, grid_w, c), persistent=False)

    def forward(self, images: torch.Tensor, is_reference: Optional[torch.Tensor] = None) -> TokenState:
        return tokenize(images, self, is_reference)


def tokenize(images: torch.Tensor, tokenizer: Tokenizer,
             is_reference: Optional[torch.Tensor] = None) -> TokenState:
    """Turn (N, 3, H, W) images into a TokenState.

    Args:
        images: Frames in [0, 1].
        tokenizer: Patch embedding and special-token parameters.
        is_reference: (N,) boolean flags; defaults to frame 0 only.
    """
    config = tokenizer.config
    if images.dim() != 4 or images.shape[1] != 3:
        raise ShapeError(f"images must be (N,3,H,W), got {tuple(images.shape)}")
    n, _, h, w = images.shape
    if (h, w) != (config.image_height, config.image_width):
        raise ShapeError(f"model expects {config.image_height}x{config.image_width} images, got {h}x{w}")

    if is_reference is None:
        is_reference = torch.zeros(n, dtype=torch.bool, device=images.device)
        is_reference[0] = True
    if tuple(is_reference.shape) != (n,):
        raise ShapeError(f"is_reference must have shape ({n},), got {tuple(is_reference.shape)}")

    patches = tokenizer.patch_embed(images).flatten(2).transpose(1, 2)
    patches = patches + tokenizer.position.to(patches.dtype)

    slot = torch.where(is_reference, 0, 1).to(images.device)
    camera = tokenizer.camera_token[slot]
    registers = tokenizer.register_token[slot]
    tokens = torch.cat([patches, camera.to(patches.dtype), registers.to(patches.dtype)], dim=1)
    return TokenState(
        tokens=tokens,
        num_patches=config.num_patches,
        num_registers=config.num_registers,
        grid=config.grid_size,
    )
