"""Model engines behind the wire protocol.

The server only needs two capabilities: point-prompted segmentation and
text+mask conditioned inpainting. Real engines load their frameworks lazily
so the package imports (and its tests run) on machines without GPUs or
checkpoints; deployments construct them once at startup.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Protocol

import numpy as np

logger = logging.getLogger(__name__)


class SegmentationEngine(Protocol):
    def predict(
        self, image: np.ndarray, points: list[tuple[int, int, int]]
    ) -> list[tuple[np.ndarray, float]]:
        """(x, y, label) prompts with label 1 foreground / 0 background, to a
        list of (bool mask of image shape, confidence score)."""
        ...


class InpaintEngine(Protocol):
    def generate(
        self, image: np.ndarray, alpha: np.ndarray, prompt: str, seed: int, count: int
    ) -> list[np.ndarray]:
        """count RGB arrays of the input shape, regenerated where alpha > 0."""
        ...


class SamEngine:
    """Segment-anything predictor over a local checkpoint."""

    def __init__(self, checkpoint: str | Path, model_type: str = "vit_h", device: str = "cuda"):
        self.checkpoint = Path(checkpoint)
        if not self.checkpoint.exists():
            raise FileNotFoundError(f"segmentation checkpoint {self.checkpoint} does not exist")
        self.model_type = model_type
        self.device = device
        self._predictor = None

    def _load(self):
        if self._predictor is not None:
            return
        from segment_anything import SamPredictor, sam_model_registry

        logger.info("loading segmentation model %s from %s", self.model_type, self.checkpoint)
        model = sam_model_registry[self.model_type](checkpoint=str(self.checkpoint))
        model.to(self.device)
        self._predictor = SamPredictor(model)

    def predict(self, image, points):
        self._load()
        coords = np.array([[x, y] for x, y, _ in points])
        labels = np.array([label for _, _, label in points])
        self._predictor.set_image(image)
        masks, scores, _ = self._predictor.predict(
            point_coords=coords, point_labels=labels, multimask_output=True
        )
        return [(mask.astype(bool), float(score)) for mask, score in zip(masks, scores)]


class DiffusersInpaintEngine:
    """Inpainting diffusion pipeline resolved from a model identifier."""

    def __init__(self, model_id: str, device: str = "cuda"):
        self.model_id = model_id
        self.device = device
        self._pipe = None

    def _load(self):
        if self._pipe is not None:
            return
        import torch
        from diffusers import AutoPipelineForInpainting

        logger.info("loading inpainting pipeline %s", self.model_id)
        dtype = torch.float16 if self.device.startswith("cuda") else torch.float32
        self._pipe = AutoPipelineForInpainting.from_pretrained(self.model_id, torch_dtype=dtype)
        self._pipe.to(self.device)

    def generate(self, image, alpha, prompt, seed, count):
        self._load()
        import torch
        from PIL import Image

        source = Image.fromarray(image, "RGB")
        mask = Image.fromarray(alpha, "L")
        generator = torch.Generator(device=self.device).manual_seed(seed & 0x7FFFFFFFFFFFFFFF)
        result = self._pipe(
            prompt=prompt,
            image=source,
            mask_image=mask,
            num_images_per_prompt=count,
            generator=generator,
            width=source.width,
            height=source.height,
        )
        out = []
        for img in result.images:
            if img.size != source.size:
                img = img.resize(source.size)
            out.append(np.asarray(img.convert("RGB"), dtype=np.uint8))
        return out
