"""
ReconstructionModel: tokenizer -> alternating-attention trunk -> heads.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import torch
from torch import nn

from src.config.experiment import ModelConfig
from src.geometry.scene import SceneBundle
from src.models.recon.aggregator import Aggregator
from src.models.recon.heads import CameraHead, CameraPrediction, DepthHead, DepthPrediction
from src.models.recon.tokens import TokenState

logger = logging.getLogger(__name__)

HEAD_PREFIXES = ("depth_head.", "camera_head.")


@dataclass
class ModelOutput:
    state: TokenState
    taps: List[TokenState]
    depth: DepthPrediction
    camera: CameraPrediction


class ReconstructionModel(nn.Module):
    def __init__(self, config: Optional[ModelConfig] = None):
        super().__init__()
        self.config = (config or ModelConfig()).check()
        self.aggregator = Aggregator(self.config)
        self.depth_head = DepthHead(self.config)
        self.camera_head = CameraHead(self.config)

    def forward(self, images: torch.Tensor, is_reference: Optional[torch.Tensor] = None) -> ModelOutput:
        state, taps = self.aggregator(images, is_reference)
        return ModelOutput(
            state=state,
            taps=taps,
            depth=self.depth_head(taps),
            camera=self.camera_head(state),
        )

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_model(config: Optional[ModelConfig] = None, seed: int = 0,
                dtype: torch.dtype = torch.float32) -> ReconstructionModel:
    """Deterministically initialized model."""
    torch.manual_seed(seed)
    model = ReconstructionModel(config).to(dtype)
    logger.info(f"Built model with {model.num_parameters()} parameters (seed {seed})")
    return model


def predict_bundle(model: ReconstructionModel, bundle: SceneBundle) -> SceneBundle:
    """Run the model on a bundle and package the predictions as a SceneBundle."""
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        output = model(bundle.images.to(dtype))
    return SceneBundle(
        images=bundle.images,
        cameras=output.camera.normalized().to(torch.float32),
        depths=output.depth.depth.to(torch.float32),
        valid=torch.ones_like(output.depth.depth, dtype=torch.bool),
        confidence=output.depth.confidence.to(torch.float32),
        name=bundle.name,
        metadata={"source": "prediction"},
    )
