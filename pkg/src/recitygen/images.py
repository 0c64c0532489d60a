"""RGB image buffers and the PNG codecs used at module boundaries.

Images are 8-bit RGB only; alpha masks travel as 8-bit grayscale PNG.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .masks import MAX_SIDE, AlphaMask, _freeze

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class ImageError(Exception):
    pass


class BadImage(ImageError):
    pass


class ImageTooLarge(ImageError):
    pass


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """8-bit RGB image, pixels shaped (height, width, 3), row-major."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) RGB pixels, got shape {pixels.shape}")
        if pixels.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {pixels.dtype}")
        h, w = pixels.shape[:2]
        if not (1 <= w <= MAX_SIDE and 1 <= h <= MAX_SIDE):
            raise ImageTooLarge(f"image dimensions {w}x{h} out of 1..{MAX_SIDE}")
        object.__setattr__(self, "pixels", _freeze(pixels))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def filled(cls, width: int, height: int, rgb: tuple[int, int, int]) -> "ImageBuffer":
        return cls(np.full((height, width, 3), rgb, dtype=np.uint8))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def __hash__(self) -> int:
        return hash((self.pixels.shape, self.pixels.tobytes()))


def encode_png(image: ImageBuffer) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image.pixels, "RGB").save(buf, "PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> ImageBuffer:
    """Decode PNG bytes into an RGB buffer. Raises BadImage for anything that
    is not a decodable PNG and ImageTooLarge beyond the 8192x8192 bound."""
    if not data.startswith(PNG_SIGNATURE):
        raise BadImage("not a PNG stream")
    try:
        with Image.open(io.BytesIO(data)) as img:
            width, height = img.size
            if width > MAX_SIDE or height > MAX_SIDE:
                raise ImageTooLarge(f"decoded size {width}x{height} exceeds {MAX_SIDE}")
            rgb = img.convert("RGB")
            return ImageBuffer(np.asarray(rgb, dtype=np.uint8))
    except ImageTooLarge:
        raise
    except (UnidentifiedImageError, OSError, ValueError, SyntaxError) as exc:
        raise BadImage(f"PNG decode failed: {exc}") from exc


def encode_alpha_png(alpha: AlphaMask) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(alpha.values, "L").save(buf, "PNG")
    return buf.getvalue()


def decode_alpha_png(data: bytes) -> AlphaMask:
    if not data.startswith(PNG_SIGNATURE):
        raise BadImage("not a PNG stream")
    try:
        with Image.open(io.BytesIO(data)) as img:
            gray = img.convert("L")
            return AlphaMask(np.asarray(gray, dtype=np.uint8))
    except (UnidentifiedImageError, OSError, ValueError, SyntaxError) as exc:
        raise BadImage(f"PNG decode failed: {exc}") from exc
