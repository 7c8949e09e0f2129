"""
Small builders shared by several test modules.
"""

import torch

from src.geometry.camera import normalize_quaternion
from src.geometry.scene import SceneBundle


def random_cameras(num: int, generator: torch.Generator, dtype=torch.float64) -> torch.Tensor:
    """Random unit-quaternion cameras with focal in [0.8, 1.5]."""
    q = normalize_quaternion(torch.randn(num, 4, generator=generator, dtype=dtype))
    t = torch.randn(num, 3, generator=generator, dtype=dtype)
    f = 0.8 + 0.7 * torch.rand(num, 2, generator=generator, dtype=dtype)
    return torch.cat([q, t, f], dim=-1)


def identity_cameras(num: int, focal: float = 1.0, dtype=torch.float64) -> torch.Tensor:
    g = torch.zeros(num, 9, dtype=dtype)
    g[:, 0] = 1.0
    g[:, 7:] = focal
    return g


def flat_bundle(num_frames: int = 2, size: int = 8, depth: float = 2.0, focal: float = 1.0) -> SceneBundle:
    """Identity cameras looking at a fronto-parallel plane."""
    return SceneBundle(
        images=torch.full((num_frames, 3, size, size), 0.5, dtype=torch.float64),
        cameras=identity_cameras(num_frames, focal),
        depths=torch.full((num_frames, size, size), depth, dtype=torch.float64),
        name="flat",
    )


def dense_attention_oracle(block, x: torch.Tensor) -> torch.Tensor:
    """One attention block over a (T, C) sequence with per-head loops and an explicit softmax."""
    qkv = block.qkv(block.norm1(x))
    c = x.shape[-1]
    heads = []
    for head in range(block.num_heads):
        lo, hi = head * block.head_dim, (head + 1) * block.head_dim
        q = qkv[:, lo:hi]
        k = qkv[:, c + lo:c + hi]
        v = qkv[:, 2 * c + lo:2 * c + hi]
        q = q / q.norm(dim=-1, keepdim=True)
        k = k / k.norm(dim=-1, keepdim=True)
        scores = block.logit_scale[head] * (q @ k.T)
        weights = scores.exp() / scores.exp().sum(dim=-1, keepdim=True)
        heads.append(weights @ v)
    x = x + block.proj(torch.cat(heads, dim=-1))
    return x + block.mlp(block.norm2(x))
