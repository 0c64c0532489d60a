"""Run the model server over real checkpoints.

Example:
    recitygen-shim --port 9900 \
        --sam-checkpoint ./sam_vit_h_4b8939.pth --sam-model-type vit_h \
        --inpaint-model stabilityai/stable-diffusion-2-inpainting \
        --device cuda
"""

from __future__ import annotations

import argparse
import sys

import uvicorn

from .app import ShimConfig, create_app
from .engines import DiffusersInpaintEngine, SamEngine


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recitygen-shim", description=__doc__)
    parser.add_argument("--port", type=int, default=9900)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--sam-checkpoint", required=True, help="path to a segmentation checkpoint")
    parser.add_argument("--sam-model-type", default="vit_h")
    parser.add_argument("--inpaint-model", required=True, help="inpainting pipeline identifier")
    parser.add_argument("--device", default="cuda")
    parser.add_argument("--max-concurrent", type=int, default=1)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = ShimConfig(port=args.port, host=args.host, max_concurrent=args.max_concurrent)
        segmenter = SamEngine(args.sam_checkpoint, model_type=args.sam_model_type, device=args.device)
    except (ValueError, FileNotFoundError) as exc:
        print(f"recitygen-shim: {exc}", file=sys.stderr)
        return 1
    inpainter = DiffusersInpaintEngine(args.inpaint_model, device=args.device)
    app = create_app(segmenter, inpainter, config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
