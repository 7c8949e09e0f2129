"""
Desk-scale training loop.

Supervised phase: per step sample a bundle and a frame count, keep frame 0 plus
a random subset, re-normalize, augment (photometric and masking only), build
patch pairs, forward, total loss, backward, clip, AdamW step.

Self-supervised phase (--ssl): same sampling without labels, one distill_step
per step, then an EMA update of the teacher; heads stay frozen.

Every step appends one JSON line to loss_log.jsonl. A non-finite loss or
gradient writes the last good parameters to last_good/ and raises
TrainingDivergedError.
"""

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional

import torch

from src.analytics.metrics import point_error
from src.config.experiment import TrainConfig, config_to_dict, save_config
from src.errors import ConfigError, NonFiniteGradientError, TrainingDivergedError
from src.geometry.scene import SceneBundle, bundle_points, normalize_scene
from src.models.recon.model import HEAD_PREFIXES, ReconstructionModel, build_model
from src.storage.checkpoint import load_checkpoint, save_checkpoint
from src.training.augment import augment
from src.training.distill import TeacherState, distill_step, ema_update
from src.training.engine import ParamStore, backward, build_optimizer, optimizer_step
from src.training.losses import supervised_losses
from src.training.pairs import build_pairs

logger = logging.getLogger(__name__)

LOSS_LOG = "loss_log.jsonl"


@dataclass
class TrainResult:
    checkpoint: Path
    loss_log: Path
    steps: int
    final_loss: float
    initial_point_error: Optional[float] = None
    final_point_error: Optional[float] = None


def sample_frames(num_frames: int, frame_range, generator: torch.Generator) -> List[int]:
    """Frame 0 plus a uniformly sized random subset of the others, in input order."""
    low, high = frame_range
    high = min(high, num_frames)
    low = min(low, high)
    count = int(torch.randint(low, high + 1, (), generator=generator))
    others = (torch.randperm(num_frames - 1, generator=generator)[:count - 1] + 1).sort().values
    return [0] + others.tolist()


def evaluate_point_error(model: ReconstructionModel, bundle: SceneBundle) -> float:
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        output = model(bundle.images.to(dtype))
    return point_error(output.depth.depth, output.camera.normalized(), bundle)


class Trainer:
    """Owns the model, optimizer and output directory of one run."""

    def __init__(self, config: TrainConfig, out_dir, init: Optional[str] = None, ssl: bool = False):
        errors = config.validate()
        if errors:
            raise ConfigError("; ".join(errors))
        self.ssl = ssl
        peak = config.ssl_peak_lr if ssl else config.schedule.peak_lr
        self.schedule = replace(config.schedule, total_steps=config.steps, peak_lr=peak)
        self.config = config
        self.dtype = torch.float64 if config.dtype == "float64" else torch.float32
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

        self.model = build_model(config.model, seed=config.seed, dtype=self.dtype)
        if init:
            load_checkpoint(self.model, init)
        self.store = ParamStore(self.model)
        self.teacher = None
        if ssl:
            self.teacher = TeacherState.from_student(self.model, config.ema_decay)
            self.store.freeze(HEAD_PREFIXES)
        self.optimizer = build_optimizer(self.store, self.schedule)
        self.generator = torch.Generator().manual_seed(config.seed)

    def _diverged(self, step: int, last_good: Dict[str, torch.Tensor], reason: str):
        self.model.load_state_dict(last_good)
        path = self.out_dir / "last_good"
        save_checkpoint(self.model, path, step, config_to_dict(self.config))
        logger.error(f"Training diverged at step {step}: {reason}")
        raise TrainingDivergedError(f"training diverged at step {step}: {reason}", checkpoint_path=str(path))

    def supervised_step(self, bundle: SceneBundle, step: int) -> Dict[str, float]:
        frames = sample_frames(bundle.num_frames, self.config.frame_range, self.generator)
        sample = normalize_scene(bundle.subset(frames).to(torch.float64))
        sample, _ = augment(sample, self.config.augmentation, self.generator)
        pairs = build_pairs(sample, self.config.model.patch_size, self.config.pairs, self.generator)

        sample = sample.to(self.dtype)
        output = self.model(sample.images)
        losses = supervised_losses(
            output,
            gt_cameras=sample.cameras,
            gt_depth=sample.depths,
            gt_points=bundle_points(sample),
            valid=sample.valid,
            weights=self.config.weights,
            pairs=pairs,
        )
        if not bool(torch.isfinite(losses.total)):
            raise NonFiniteGradientError(f"loss is {float(losses.total)}")
        backward(losses.total, self.store)
        stats = optimizer_step(self.store, self.optimizer, self.schedule, step)
        return {**losses.to_dict(), "frames": len(frames), "lr": stats.lr, "grad_norm": stats.grad_norm}

    def ssl_step(self, bundle: SceneBundle, step: int) -> Dict[str, float]:
        frames = sample_frames(bundle.num_frames, self.config.frame_range, self.generator)
        sample = bundle.subset(frames)
        seeds = tuple(int(s) for s in torch.randint(0, 2**31 - 1, (2,), generator=self.generator))
        result = distill_step(self.store, self.teacher, sample, self.config.ssl_augmentation, seeds,
                              self.config.feature_weight, self.config.regression_weight)
        if not bool(torch.isfinite(result.total)):
            raise NonFiniteGradientError(f"loss is {float(result.total)}")
        stats = optimizer_step(self.store, self.optimizer, self.schedule, step)
        ema_update(self.teacher.model, self.model, self.teacher.decay)
        return {**result.to_dict(), "frames": len(frames), "lr": stats.lr, "grad_norm": stats.grad_norm}

    def fit(self, bundles: List[SceneBundle]) -> TrainResult:
        if not bundles:
            raise ConfigError("training needs at least one bundle")
        save_config(self.config, self.out_dir / "config.json")
        log_path = self.out_dir / LOSS_LOG

        eval_scene = None
        initial = None
        if not self.ssl and bundles[0].is_labeled:
            eval_scene = normalize_scene(bundles[0].to(torch.float64))
            initial = evaluate_point_error(self.model, eval_scene)

        final_loss = float("nan")
        with open(log_path, "w", encoding="utf-8") as log:
            for step in range(1, self.config.steps + 1):
                last_good = {k: v.detach().clone() for k, v in self.model.state_dict().items()}
                index = int(torch.randint(0, len(bundles), (), generator=self.generator))
                try:
                    if self.ssl:
                        record = self.ssl_step(bundles[index], step)
                    else:
                        record = self.supervised_step(bundles[index], step)
                except NonFiniteGradientError as e:
                    self._diverged(step, last_good, str(e))
                record = {"step": step, "bundle": bundles[index].name, **record}
                log.write(json.dumps(record, sort_keys=True) + "\n")
                final_loss = record["total"]
                if step == 1 or step % 50 == 0 or step == self.config.steps:
                    logger.info(f"step {step}/{self.config.steps} loss {final_loss:.5f} lr {record['lr']:.2e}")

        checkpoint = self.out_dir / "checkpoint"
        save_checkpoint(self.model, checkpoint, self.config.steps, config_to_dict(self.config))
        final = evaluate_point_error(self.model, eval_scene) if eval_scene is not None else None
        if initial is not None:
            logger.info(f"Point error {initial:.4f} -> {final:.4f}")
        return TrainResult(
            checkpoint=checkpoint,
            loss_log=log_path,
            steps=self.config.steps,
            final_loss=final_loss,
            initial_point_error=initial,
            final_point_error=final,
        )


def train_toy(config: TrainConfig, bundles: List[SceneBundle], out_dir, ssl: bool = False,
              init: Optional[str] = None) -> TrainResult:
    """Run one deterministic training phase and write checkpoint + loss log to out_dir."""
    logger.info(f"Starting {'self-supervised' if ssl else 'supervised'} training for {config.steps} steps")
    return Trainer(config, out_dir, init=init, ssl=ssl).fit(bundles)
