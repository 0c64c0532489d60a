"""Reference model server for the platform's segmentation/inpainting wire
protocol, wrapping a promptable-segmentation checkpoint and a text-conditioned
inpainting diffusion pipeline."""

__version__ = "0.1.0"

from .app import ShimConfig, create_app  # noqa: F401
