"""
Stochastic sequence augmentations with inverse bookkeeping.

Photometric jitter, Gaussian blur and grayscale act on pixels only. Masking
blacks out a rectangle and marks its depth invalid. A quarter-turn rotation is
applied to images and depth maps; cameras are dropped because the rotated
views no longer follow the center-principal-point model in the same axes.
Frame permutation reorders everything; the new frame 0 is the reference.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import torch
import torchvision.transforms.v2.functional as TF

from src.config.experiment import AugmentationSpec
from src.geometry.scene import SceneBundle

logger = logging.getLogger(__name__)

# (frame before permutation, top, left, bottom, right), bottom/right exclusive
MaskRect = Tuple[int, int, int, int, int]


@dataclass
class AugmentRecord:
    """What augment() did, enough to map predictions back to the input order."""

    permutation: List[int]
    rotation: int = 0
    masks: List[MaskRect] = field(default_factory=list)
    jitter: List[Tuple[float, float, float, float]] = field(default_factory=list)
    blur_sigmas: List[Optional[float]] = field(default_factory=list)

    @property
    def inverse(self) -> List[int]:
        inverse = [0] * len(self.permutation)
        for k, source in enumerate(self.permutation):
            inverse[source] = k
        return inverse

    def restore_order(self, values: torch.Tensor) -> torch.Tensor:
        """Reorder a frame-leading tensor from augmented order back to input order."""
        index = torch.as_tensor(self.inverse, dtype=torch.long, device=values.device)
        return values[index]


def _uniform(generator: torch.Generator, low: float, high: float) -> float:
    return float(low + (high - low) * torch.rand((), generator=generator, dtype=torch.float64))


def _bernoulli(generator: torch.Generator, probability: float) -> bool:
    return bool(torch.rand((), generator=generator, dtype=torch.float64) < probability)


def apply_mask(bundle: SceneBundle, frame: int, top: int, left: int, bottom: int, right: int) -> SceneBundle:
    """Black out [top, bottom) x [left, right) of one frame and mark it depth-invalid."""
    images = bundle.images.clone()
    images[frame, :, top:bottom, left:right] = 0.0
    valid = bundle.valid
    if valid is None:
        valid = torch.ones(bundle.num_frames, bundle.height, bundle.width, dtype=torch.bool)
    valid = valid.clone()
    valid[frame, top:bottom, left:right] = False
    return replace(bundle, images=images, valid=valid)


def rotate_bundle(bundle: SceneBundle, quarter_turns: int) -> SceneBundle:
    """Rotate every frame counter-clockwise by quarter_turns * 90 degrees."""
    k = quarter_turns % 4
    if k == 0:
        return bundle

    def turn(value):
        return None if value is None else torch.rot90(value, k, dims=(-2, -1))

    return replace(
        bundle,
        images=turn(bundle.images),
        cameras=None,
        depths=turn(bundle.depths),
        valid=turn(bundle.valid),
        dynamic=turn(bundle.dynamic),
        confidence=turn(bundle.confidence),
    )


def _photometric(image: torch.Tensor, spec: AugmentationSpec, generator: torch.Generator):
    """Jitter, grayscale and blur one (3, H, W) frame; returns (image, jitter factors, sigma)."""
    brightness = _uniform(generator, max(0.0, 1 - spec.brightness), 1 + spec.brightness)
    contrast = _uniform(generator, max(0.0, 1 - spec.contrast), 1 + spec.contrast)
    saturation = _uniform(generator, max(0.0, 1 - spec.saturation), 1 + spec.saturation)
    hue = _uniform(generator, -spec.hue, spec.hue)

    out = image
    if spec.brightness > 0:
        out = TF.adjust_brightness(out, brightness)
    if spec.contrast > 0:
        out = TF.adjust_contrast(out, contrast)
    if spec.saturation > 0:
        out = TF.adjust_saturation(out, saturation)
    if spec.hue > 0:
        out = TF.adjust_hue(out, hue)
    if spec.grayscale_probability > 0 and _bernoulli(generator, spec.grayscale_probability):
        out = TF.rgb_to_grayscale(out, num_output_channels=3)

    sigma = None
    if spec.blur_probability > 0 and _bernoulli(generator, spec.blur_probability):
        sigma = _uniform(generator, *spec.blur_sigma)
        size = 2 * math.ceil(3 * sigma) + 1
        out = TF.gaussian_blur(out, kernel_size=[size, size], sigma=[sigma, sigma])
    return out, (brightness, contrast, saturation, hue), sigma


def draw_rotation(spec: AugmentationSpec, generator: torch.Generator, square: bool) -> int:
    """Quarter turns for a rotation augmentation; odd turns only for square frames."""
    if not spec.rotate:
        return 0
    choices = [0, 1, 2, 3] if square else [0, 2]
    return choices[int(torch.randint(0, len(choices), (), generator=generator))]


def draw_permutation(spec: AugmentationSpec, num_frames: int, generator: torch.Generator) -> List[int]:
    if not spec.permute or num_frames < 2:
        return list(range(num_frames))
    if spec.permute_reference:
        return torch.randperm(num_frames, generator=generator).tolist()
    return [0] + (torch.randperm(num_frames - 1, generator=generator) + 1).tolist()


def augment(bundle: SceneBundle, spec: AugmentationSpec, generator: torch.Generator,
            rotation: Optional[int] = None) -> Tuple[SceneBundle, AugmentRecord]:
    """Apply `spec` to a bundle.

    Args:
        bundle: Input sequence.
        spec: Augmentation strengths and switches.
        generator: Source of all randomness.
        rotation: Quarter turns to use instead of drawing one (shared between streams).

    Returns:
        (augmented bundle, record). record.permutation[k] is the input frame
        placed at position k.
    """
    if rotation is None:
        rotation = draw_rotation(spec, generator, bundle.height == bundle.width)
    out = rotate_bundle(bundle, rotation)

    images, jitter, sigmas = [], [], []
    for i in range(out.num_frames):
        image, factors, sigma = _photometric(out.images[i], spec, generator)
        images.append(image)
        jitter.append(factors)
        sigmas.append(sigma)
    out = replace(out, images=torch.stack(images))

    masks = []
    if spec.mask_probability > 0:
        for i in range(out.num_frames):
            if not _bernoulli(generator, spec.mask_probability):
                continue
            low, high = spec.mask_size
            mh = min(int(torch.randint(low, high + 1, (), generator=generator)), out.height)
            mw = min(int(torch.randint(low, high + 1, (), generator=generator)), out.width)
            top = int(torch.randint(0, out.height - mh + 1, (), generator=generator))
            left = int(torch.randint(0, out.width - mw + 1, (), generator=generator))
            out = apply_mask(out, i, top, left, top + mh, left + mw)
            masks.append((i, top, left, top + mh, left + mw))

    permutation = draw_permutation(spec, out.num_frames, generator)
    if permutation != list(range(out.num_frames)):
        out = out.subset(permutation)
    record = AugmentRecord(permutation=permutation, rotation=rotation, masks=masks,
                           jitter=jitter, blur_sigmas=sigmas)
    logger.debug(f"Augmented '{bundle.name}': rotation {rotation}, permutation {permutation}, {len(masks)} masks")
    return out, record
