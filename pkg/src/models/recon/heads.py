"""
Dense depth head and single-pass camera head.
"""

from dataclasses import dataclass
from typing import List

import torch
import torch.nn.functional as F
from torch import nn

from src.config.experiment import ModelConfig
from src.errors import ShapeError
from src.geometry.camera import normalize_quaternion, split_encoding
from src.models.recon.attention import AttentionBlock
from src.models.recon.tokens import TokenState

FOCAL_FLOOR = 1e-4
DEGENERATE_QUATERNION = 1e-8


@dataclass
class DepthPrediction:
    depth: torch.Tensor
    confidence: torch.Tensor


@dataclass
class CameraPrediction:
    """Raw head output and the activated 9-vector per frame.

    `degenerate` flags frames whose raw quaternion is (numerically) zero and
    therefore has no rotation.
    """

    raw: torch.Tensor
    encoding: torch.Tensor
    degenerate: torch.Tensor

    @property
    def q(self) -> torch.Tensor:
        return self.encoding[:, :4]

    @property
    def t(self) -> torch.Tensor:
        return self.encoding[:, 4:7]

    @property
    def f(self) -> torch.Tensor:
        return self.encoding[:, 7:9]

    def normalized(self) -> torch.Tensor:
        """Encoding with unit, canonicalized quaternions, ready for projection."""
        q, t, f = split_encoding(self.encoding)
        return torch.cat([normalize_quaternion(q), t, f], dim=-1)


def activate_depth(raw: torch.Tensor) -> DepthPrediction:
    """(N, 2, H, W) logits -> depth = softplus, confidence = 1 + softplus."""
    tiny = torch.finfo(raw.dtype).tiny
    return DepthPrediction(
        depth=F.softplus(raw[:, 0]).clamp_min(tiny),
        confidence=1.0 + F.softplus(raw[:, 1]),
    )


def activate_camera(raw: torch.Tensor, focal_floor: float = FOCAL_FLOOR) -> CameraPrediction:
    """No activation on q and t; f = relu(raw) + floor."""
    q, t, f = split_encoding(raw)
    encoding = torch.cat([q, t, F.relu(f) + focal_floor], dim=-1)
    degenerate = q.detach().norm(dim=-1) < DEGENERATE_QUATERNION
    return CameraPrediction(raw=raw, encoding=encoding, degenerate=degenerate)


def pixel_shuffle_planes(raw: torch.Tensor, upsample: int) -> torch.Tensor:
    """Rearrange (N, h, w, planes * u^2) per-token outputs into (N, planes, u*h, u*w).

    Channel k = plane * u^2 + dy * u + dx of token (i, j) lands at pixel
    (i * u + dy, j * u + dx) of that plane.
    """
    if raw.shape[-1] % (upsample * upsample):
        raise ShapeError(f"{raw.shape[-1]} channels cannot be shuffled by factor {upsample}")
    return F.pixel_shuffle(raw.permute(0, 3, 1, 2), upsample)


class DepthHead(nn.Module):
    """Fuse the tapped image tokens, refine at low resolution, then MLP + pixel shuffle."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c, u = config.hidden_dim, config.depth_upsample
        self.fuse = nn.Linear(config.num_taps * c, c)
        self.conv1 = nn.Conv2d(c, c, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(c, c, kernel_size=3, padding=1)
        self.mlp = nn.Sequential(nn.Linear(c, c), nn.GELU(), nn.Linear(c, 2 * u * u))

    def forward(self, taps: List[TokenState]) -> DepthPrediction:
        return activate_depth(self.logits(taps))

    def logits(self, taps: List[TokenState]) -> torch.Tensor:
        """Pre-activation (N, 2, H, W) depth/confidence planes."""
        config = self.config
        if len(taps) != config.num_taps:
            raise ShapeError(f"depth head expects {config.num_taps} taps, got {len(taps)}")
        grid_h, grid_w = config.grid_size
        for tap in taps:
            if tap.image_tokens.shape[1] != grid_h * grid_w:
                raise ShapeError(f"tap has {tap.image_tokens.shape[1]} image tokens, expected {grid_h * grid_w}")

        fused = self.fuse(torch.cat([tap.image_tokens for tap in taps], dim=-1))
        n, _, c = fused.shape
        x = fused.transpose(1, 2).reshape(n, c, grid_h, grid_w)

        u = config.depth_upsample
        size = (config.image_height // u, config.image_width // u)
        if (grid_h, grid_w) != size:
            x = F.interpolate(x, size=size, mode="bilinear", align_corners=False)
        x = F.gelu(self.conv1(x))
        x = F.gelu(self.conv2(x))
        raw = self.mlp(x.permute(0, 2, 3, 1))
        return pixel_shuffle_planes(raw, u)


class CameraHead(nn.Module):
    """Joint self-attention over every frame's camera token and registers, then a per-frame MLP."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        c = config.hidden_dim
        self.blocks = nn.ModuleList(
            AttentionBlock(c, config.num_heads, config.mlp_ratio) for _ in range(config.camera_head_blocks)
        )
        self.norm = nn.LayerNorm(c)
        self.mlp = nn.Sequential(nn.Linear(c, c), nn.GELU(), nn.Linear(c, 9))
        # start near the identity rotation and unit focal
        with torch.no_grad():
            self.mlp[-1].bias.copy_(torch.tensor([1.0, 0, 0, 0, 0, 0, 0, 1.0, 1.0]))

    def forward(self, state: TokenState) -> CameraPrediction:
        return activate_camera(self.logits(state))

    def logits(self, state: TokenState) -> torch.Tensor:
        special = state.special_tokens
        n, s, c = special.shape
        x = special.reshape(1, n * s, c)
        for block in self.blocks:
            x = block(x)
        camera = x.reshape(n, s, c)[:, 0]
        return self.mlp(self.norm(camera))
