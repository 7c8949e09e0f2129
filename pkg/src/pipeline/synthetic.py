"""
Synthetic scenes with analytically exact cameras, depths and masks.

Kinds:
    plane                       fronto-parallel textured plane, cameras translate in x/y
    box-room                    cameras inside a textured box, small yaw and translation
    orbit                       cameras on a circle looking at a textured unit sphere
    dynamic-translating-object  plane plus a square that moves between frames (dynamic mask)

All randomness comes from numpy's default_rng(seed); the bundle is normalized
to unit space and stored as float32.
"""

import logging
import math
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import torch
from scipy.spatial.transform import Rotation

from src.errors import ConfigError
from src.geometry.scene import SceneBundle, normalize_scene

logger = logging.getLogger(__name__)

KINDS = ("plane", "box-room", "orbit", "dynamic-translating-object")
DEFAULT_FRAMES = {"plane": 3, "box-room": 4, "orbit": 8, "dynamic-translating-object": 4}


def _encoding(R: np.ndarray, t: np.ndarray, focal: float) -> np.ndarray:
    x, y, z, w = Rotation.from_matrix(R).as_quat()
    q = np.array([w, x, y, z])
    if q[0] < 0:
        q = -q
    return np.concatenate([q, t, [focal, focal]])


def _rays(R: np.ndarray, focal: float, height: int, width: int) -> np.ndarray:
    """(H, W, 3) world-frame ray directions with unit camera-z component."""
    v, u = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing="ij")
    x = (u - width / 2.0) / (focal * width / 2.0)
    y = (v - height / 2.0) / (focal * height / 2.0)
    cam = np.stack([x, y, np.ones_like(x)], axis=-1)
    return cam @ R


def _texture(rng: np.random.Generator, waves: int = 6) -> Callable[[np.ndarray], np.ndarray]:
    """Random smooth colour field over 3-D points, values in [0, 1]."""
    freqs = rng.uniform(0.5, 4.0, size=(3, waves, 3)) * rng.choice([-1.0, 1.0], size=(3, waves, 3))
    phases = rng.uniform(0.0, 2 * math.pi, size=(3, waves))
    base = rng.uniform(0.25, 0.75, size=3)

    def colour(points: np.ndarray) -> np.ndarray:
        channels = []
        for c in range(3):
            field = np.sin(points @ freqs[c].T + phases[c]).mean(axis=-1)
            channels.append(np.clip(base[c] + 0.45 * field, 0.0, 1.0))
        return np.stack(channels, axis=0)

    return colour


def _look_at(center: np.ndarray, target: np.ndarray) -> np.ndarray:
    """World-to-camera rotation for a camera at `center` facing `target`, world +y pointing down."""
    forward = target - center
    forward = forward / np.linalg.norm(forward)
    down = np.array([0.0, 1.0, 0.0])
    down = down - forward * (down @ forward)
    down = down / np.linalg.norm(down)
    right = np.cross(down, forward)
    return np.stack([right, down, forward], axis=0)


def _plane_frames(rng, num_frames, focal=1.0):
    distance = rng.uniform(2.0, 3.0)
    offsets = rng.uniform(-0.3, 0.3, size=(num_frames, 2))
    offsets[0] = 0.0
    frames = []
    for i in range(num_frames):
        R = np.eye(3)
        t = np.array([offsets[i, 0], offsets[i, 1], 0.0])
        frames.append((R, t))
    return distance, frames, focal


def _plane(rng, num_frames, height, width):
    distance, frames, focal = _plane_frames(rng, num_frames)
    colour = _texture(rng)
    images, depths, cameras = [], [], []
    for R, t in frames:
        center = -R.T @ t
        rays = _rays(R, focal, height, width)
        points = center + distance * rays
        images.append(colour(points))
        depths.append(np.full((height, width), distance))
        cameras.append(_encoding(R, t, focal))
    return images, depths, cameras, None


def _box_room(rng, num_frames, height, width):
    low = np.array([-2.0, -1.5, -2.0])
    high = np.array([2.0, 1.5, 2.5])
    focal = 1.0
    colour = _texture(rng)
    images, depths, cameras = [], [], []
    for i in range(num_frames):
        yaw = 0.0 if i == 0 else rng.uniform(-0.35, 0.35)
        center = np.zeros(3) if i == 0 else rng.uniform(-0.3, 0.3, size=3)
        R = Rotation.from_rotvec([0.0, yaw, 0.0]).as_matrix().T
        t = -R @ center
        rays = _rays(R, focal, height, width)
        with np.errstate(divide="ignore", invalid="ignore"):
            exits = np.where(rays > 0, (high - center) / rays, (low - center) / rays)
            exits = np.where(np.abs(rays) < 1e-12, np.inf, exits)
        s = exits.min(axis=-1)
        points = center + s[..., None] * rays
        images.append(colour(points))
        depths.append(s)
        cameras.append(_encoding(R, t, focal))
    return images, depths, cameras, None


def _orbit(rng, num_frames, height, width, radius=3.0, focal=2.0):
    colour = _texture(rng)
    start = rng.uniform(0.0, 2 * math.pi)
    images, depths, cameras = [], [], []
    for i in range(num_frames):
        angle = start + 2 * math.pi * i / num_frames
        center = radius * np.array([math.sin(angle), 0.0, math.cos(angle)])
        R = _look_at(center, np.zeros(3))
        t = -R @ center
        rays = _rays(R, focal, height, width)
        # |center + s * ray| = 1, nearest root
        a = (rays ** 2).sum(-1)
        b = 2.0 * rays @ center
        c = center @ center - 1.0
        disc = b * b - 4 * a * c
        hit = disc >= 0
        s = np.where(hit, (-b - np.sqrt(np.where(hit, disc, 0.0))) / (2 * a), 0.0)
        points = center + s[..., None] * rays
        image = np.where(hit[None], colour(points), 0.05)
        images.append(image)
        depths.append(np.where(hit, s, 0.0))
        cameras.append(_encoding(R, t, focal))
    return images, depths, cameras, None


def _dynamic(rng, num_frames, height, width):
    distance, frames, focal = _plane_frames(rng, num_frames)
    background = _texture(rng)
    obj_colour = rng.uniform(0.0, 1.0, size=3)
    obj_depth = distance * 0.6
    size = 0.25 * obj_depth
    start = rng.uniform(-0.4, 0.0, size=2) * obj_depth
    step = rng.uniform(0.05, 0.1) * obj_depth

    images, depths, cameras, dynamic = [], [], [], []
    for i, (R, t) in enumerate(frames):
        center = -R.T @ t
        rays = _rays(R, focal, height, width)
        plane_points = center + distance * rays
        obj_points = center + obj_depth * rays
        x0, y0 = start[0] + i * step, start[1]
        inside = ((obj_points[..., 0] >= x0) & (obj_points[..., 0] < x0 + size)
                  & (obj_points[..., 1] >= y0) & (obj_points[..., 1] < y0 + size))
        image = np.where(inside[None], obj_colour[:, None, None], background(plane_points))
        images.append(image)
        depths.append(np.where(inside, obj_depth, distance))
        dynamic.append(inside)
        cameras.append(_encoding(R, t, focal))
    return images, depths, cameras, dynamic


GENERATORS: Dict[str, Callable] = {
    "plane": _plane,
    "box-room": _box_room,
    "orbit": _orbit,
    "dynamic-translating-object": _dynamic,
}


def make_synthetic(kind: str, seed: int = 0, num_frames: Optional[int] = None,
                   size: Tuple[int, int] = (64, 64)) -> SceneBundle:
    """Generate a normalized synthetic SceneBundle.

    Args:
        kind: One of KINDS.
        seed: Seed of every random choice.
        num_frames: Frames to render; defaults per kind.
        size: (height, width) in pixels.
    """
    if kind not in GENERATORS:
        raise ConfigError(f"unknown synthetic kind {kind!r}, expected one of {KINDS}")
    num_frames = num_frames or DEFAULT_FRAMES[kind]
    height, width = size
    rng = np.random.default_rng(seed)
    images, depths, cameras, dynamic = GENERATORS[kind](rng, num_frames, height, width)

    depth = torch.from_numpy(np.stack(depths))
    bundle = SceneBundle(
        images=torch.from_numpy(np.stack(images)),
        cameras=torch.from_numpy(np.stack(cameras)),
        depths=depth,
        valid=depth > 0,
        dynamic=None if dynamic is None else torch.from_numpy(np.stack(dynamic)),
        name=f"{kind}-{seed}",
        metadata={"kind": kind, "seed": seed},
    )
    bundle = normalize_scene(bundle).to(torch.float32)
    logger.info(f"Generated synthetic '{bundle.name}' with {num_frames} frames of {height}x{width}")
    return bundle
