"""Payload codecs for the model-server wire protocol.

Masks travel as run-length counts over the row-major scan, alternating values
starting with zeros; only the first count may be zero and the counts sum to
width * height. Images travel as base64 PNG.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image, UnidentifiedImageError

MAX_SIDE = 8192


class PayloadError(Exception):
    """Client-side protocol violation; maps to HTTP 400."""


def rle_encode(mask: np.ndarray) -> list[int]:
    flat = np.asarray(mask, dtype=bool).ravel()
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    edges = np.concatenate(([0], boundaries, [flat.size]))
    runs = np.diff(edges).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def decode_image_b64(data: str, field: str) -> np.ndarray:
    """Base64 PNG to an RGB uint8 array, bounds-checked."""
    try:
        raw = base64.b64decode(data, validate=True)
    except (ValueError, TypeError) as exc:
        raise PayloadError(f"{field} is not valid base64: {exc}") from exc
    try:
        with Image.open(io.BytesIO(raw)) as img:
            width, height = img.size
            if width > MAX_SIDE or height > MAX_SIDE:
                raise PayloadError(f"{field} is {width}x{height}, larger than {MAX_SIDE}")
            if width < 1 or height < 1:
                raise PayloadError(f"{field} is empty")
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except PayloadError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise PayloadError(f"{field} is not a decodable PNG: {exc}") from exc


def decode_gray_b64(data: str, field: str) -> np.ndarray:
    """Base64 PNG to an 8-bit grayscale array (alpha mask)."""
    try:
        raw = base64.b64decode(data, validate=True)
    except (ValueError, TypeError) as exc:
        raise PayloadError(f"{field} is not valid base64: {exc}") from exc
    try:
        with Image.open(io.BytesIO(raw)) as img:
            return np.asarray(img.convert("L"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise PayloadError(f"{field} is not a decodable PNG: {exc}") from exc


def encode_image_b64(pixels: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(pixels.astype(np.uint8), "RGB").save(buf, "PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")
