"""
EMA teacher-student self-distillation.

Teacher and student see independently augmented copies of one sequence; the
quarter-turn rotation is drawn once and shared. After restoring the input frame
order, the student matches the teacher's tapped token states (MSE) and regresses
its cameras and depths onto the teacher's (l1). Head parameters stay frozen.
"""

import copy
import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from src.config.experiment import AugmentationSpec
from src.errors import ShapeError
from src.geometry.camera import relative_to_reference
from src.geometry.scene import SceneBundle
from src.models.recon.model import ReconstructionModel
from src.training.augment import augment, draw_rotation
from src.training.engine import ParamStore, backward
from src.training.losses import camera_loss

logger = logging.getLogger(__name__)


@dataclass
class TeacherState:
    model: ReconstructionModel
    decay: float = 0.999

    @classmethod
    def from_student(cls, student: ReconstructionModel, decay: float = 0.999) -> "TeacherState":
        teacher = copy.deepcopy(student)
        for p in teacher.parameters():
            p.requires_grad_(False)
        return cls(model=teacher.eval(), decay=decay)


@dataclass
class DistillResult:
    total: torch.Tensor
    feature: torch.Tensor
    camera: torch.Tensor
    depth: torch.Tensor
    grads: Dict[str, torch.Tensor]

    def to_dict(self) -> Dict[str, float]:
        return {
            "total": float(self.total),
            "feature": float(self.feature),
            "camera": float(self.camera),
            "depth": float(self.depth),
        }


def ema_update(teacher: nn.Module, student: nn.Module, decay: float) -> nn.Module:
    """theta_T <- m * theta_T + (1 - m) * theta_S for every parameter, in place.

    Raises:
        ShapeError: if the two models do not have identical parameter names and shapes.
    """
    t_params = dict(teacher.named_parameters())
    s_params = dict(student.named_parameters())
    if t_params.keys() != s_params.keys():
        raise ShapeError("teacher and student have different parameter sets")
    with torch.no_grad():
        for name, t in t_params.items():
            s = s_params[name]
            if t.shape != s.shape:
                raise ShapeError(f"{name}: teacher {tuple(t.shape)} vs student {tuple(s.shape)}")
            t.mul_(decay).add_(s.to(t.dtype), alpha=1.0 - decay)
    return teacher


def _unmasked(bundle: SceneBundle) -> torch.Tensor:
    if bundle.valid is None:
        return torch.ones(bundle.num_frames, bundle.height, bundle.width, dtype=torch.bool)
    return bundle.valid


def distill_step(store: ParamStore, teacher: TeacherState, bundle: SceneBundle, spec: AugmentationSpec,
                 seeds: Tuple[int, int], feature_weight: float = 1.0,
                 regression_weight: float = 1.0) -> DistillResult:
    """One self-distillation step; fills store.grads for the student.

    Args:
        store: Student parameters (heads frozen by the caller).
        teacher: EMA teacher.
        bundle: Sequence; cameras and depths may be absent.
        spec: Augmentation applied independently to each stream.
        seeds: (teacher seed, student seed) of the two augmentation streams.
        feature_weight: Weight of the token feature-matching term.
        regression_weight: Weight of the camera and depth regression terms.
    """
    student = store.module
    dtype = next(student.parameters()).dtype
    teacher_seed, student_seed = seeds

    shared = torch.Generator().manual_seed(teacher_seed * 1_000_003 + student_seed)
    rotation = draw_rotation(spec, shared, bundle.height == bundle.width)
    t_bundle, t_record = augment(bundle, spec, torch.Generator().manual_seed(teacher_seed), rotation)
    s_bundle, s_record = augment(bundle, spec, torch.Generator().manual_seed(student_seed), rotation)

    with torch.no_grad():
        t_out = teacher.model(t_bundle.images.to(dtype))
    s_out = student(s_bundle.images.to(dtype))

    feature = sum(
        F.mse_loss(s_record.restore_order(s_tap.tokens), t_record.restore_order(t_tap.tokens))
        for s_tap, t_tap in zip(s_out.taps, t_out.taps)
    ) / len(s_out.taps)

    # both streams re-expressed relative to input frame 0
    s_cameras = relative_to_reference(s_record.restore_order(s_out.camera.encoding))
    t_cameras = relative_to_reference(t_record.restore_order(t_out.camera.encoding))
    camera = camera_loss(s_cameras, t_cameras.detach())

    s_depth = s_record.restore_order(s_out.depth.depth)
    t_depth = t_record.restore_order(t_out.depth.depth)
    both = s_record.restore_order(_unmasked(s_bundle)) & t_record.restore_order(_unmasked(t_bundle))
    if bool(both.any()):
        depth = (s_depth - t_depth).abs()[both].mean()
    else:
        depth = s_depth.new_zeros(())

    total = feature_weight * feature + regression_weight * (camera + depth)
    grads = backward(total, store)
    return DistillResult(total=total.detach(), feature=feature.detach(), camera=camera.detach(),
                         depth=depth.detach(), grads=grads)
