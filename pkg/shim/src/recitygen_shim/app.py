"""HTTP server speaking the platform's model wire protocol.

Endpoints:
  POST /v1/segment  {"image_png": b64, "points": [{"x", "y", "label" 1|0}]}
                    -> {"masks": [{"rle", "width", "height", "score"}]}
  POST /v1/inpaint  {"image_png": b64, "mask_png": b64 gray, "prompt",
                     "seed", "num_images"} -> {"images": [b64 png, ...]}
  GET  /v1/health   -> 200 {"status": "ok"}

Schema violations return 400 {"error": ...}; inference failures return 500.
Inference runs under a semaphore (default 1 concurrent) to fit single-GPU
deployments.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .codecs import PayloadError, decode_gray_b64, decode_image_b64, encode_image_b64, rle_encode
from .engines import InpaintEngine, SegmentationEngine

logger = logging.getLogger(__name__)

MAX_IMAGES = 8
MAX_PROMPT_CHARS = 500
UINT64_MAX = 2**64 - 1


@dataclass
class ShimConfig:
    port: int = 9900
    host: str = "127.0.0.1"
    max_concurrent: int = 1

    def __post_init__(self) -> None:
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port {self.port} out of range")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise PayloadError(message)


def create_app(
    segmenter: SegmentationEngine,
    inpainter: InpaintEngine,
    config: ShimConfig | None = None,
) -> FastAPI:
    config = config or ShimConfig()
    gate = threading.Semaphore(config.max_concurrent)
    app = FastAPI(title="recitygen-model-shim")

    @app.exception_handler(PayloadError)
    async def on_payload_error(_: Request, exc: PayloadError) -> JSONResponse:
        return _error(400, str(exc))

    @app.exception_handler(Exception)
    async def on_failure(_: Request, exc: Exception) -> JSONResponse:
        logger.exception("inference failure", exc_info=exc)
        return _error(500, f"inference failed: {exc}")

    @app.get("/v1/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/v1/segment")
    def segment(body: dict) -> dict:
        _require(isinstance(body.get("image_png"), str), "image_png must be a base64 string")
        raw_points = body.get("points")
        _require(isinstance(raw_points, list) and raw_points, "points must be a non-empty list")
        points: list[tuple[int, int, int]] = []
        for item in raw_points:
            _require(isinstance(item, dict), "each point must be an object")
            try:
                x, y, label = int(item["x"]), int(item["y"]), int(item["label"])
            except (KeyError, TypeError, ValueError):
                raise PayloadError("points need integer x, y and label") from None
            _require(label in (0, 1), "label must be 1 (include) or 0 (exclude)")
            points.append((x, y, label))
        _require(any(label == 1 for _, _, label in points), "at least one label-1 point required")

        image = decode_image_b64(body["image_png"], "image_png")
        height, width = image.shape[:2]
        for x, y, _ in points:
            _require(0 <= x < width and 0 <= y < height, f"point ({x},{y}) outside {width}x{height}")

        with gate:
            predictions = segmenter.predict(image, points)
        masks = []
        for mask, score in sorted(predictions, key=lambda p: -p[1]):
            _require(mask.shape == (height, width), "engine returned a mask of the wrong shape")
            masks.append(
                {"rle": rle_encode(mask), "width": width, "height": height, "score": float(score)}
            )
        return {"masks": masks}

    @app.post("/v1/inpaint")
    def inpaint(body: dict) -> dict:
        _require(isinstance(body.get("image_png"), str), "image_png must be a base64 string")
        _require(isinstance(body.get("mask_png"), str), "mask_png must be a base64 string")
        prompt = body.get("prompt")
        _require(isinstance(prompt, str) and prompt.strip(), "prompt must be a non-empty string")
        _require(len(prompt.strip()) <= MAX_PROMPT_CHARS, f"prompt longer than {MAX_PROMPT_CHARS}")
        seed = body.get("seed")
        _require(isinstance(seed, int) and not isinstance(seed, bool), "seed must be an integer")
        _require(0 <= seed <= UINT64_MAX, "seed must fit in 64 bits")
        num_images = body.get("num_images")
        _require(
            isinstance(num_images, int) and not isinstance(num_images, bool),
            "num_images must be an integer",
        )
        _require(1 <= num_images <= MAX_IMAGES, f"num_images must be 1..{MAX_IMAGES}")

        image = decode_image_b64(body["image_png"], "image_png")
        alpha = decode_gray_b64(body["mask_png"], "mask_png")
        _require(
            alpha.shape == image.shape[:2],
            f"mask is {alpha.shape[1]}x{alpha.shape[0]}, image is "
            f"{image.shape[1]}x{image.shape[0]}",
        )

        with gate:
            generated = inpainter.generate(image, alpha, prompt.strip(), seed, num_images)
        if len(generated) != num_images:
            raise RuntimeError(f"engine produced {len(generated)} of {num_images} images")
        images = []
        for out in generated:
            out = np.asarray(out, dtype=np.uint8)
            if out.shape != image.shape:
                raise RuntimeError("engine returned an image of the wrong shape")
            images.append(encode_image_b64(out))
        return {"images": images}

    return app
