"""Uniform gateway to segmentation and inpainting backends.

Two interchangeable kinds: a built-in deterministic mock (no network, no
models) and an HTTP client speaking the wire protocol below. Whatever the
backend returns, the gateway itself guarantees that pixels with alpha 0 in
the inpainting request come back bit-identical to the source image.

Wire protocol (JSON bodies, PNG payloads base64-encoded):
  POST {endpoint}/v1/segment
    request  {"image_png": b64, "points": [{"x": int, "y": int, "label": 1|0}]}
             label 1 = include, 0 = exclude
    response {"masks": [{"rle": [int...], "width": int, "height": int,
                         "score": float}]}
  POST {endpoint}/v1/inpaint
    request  {"image_png": b64, "mask_png": b64 8-bit gray alpha,
              "prompt": str, "seed": uint64, "num_images": int}
    response {"images": [b64 PNG, ...]}
  GET {endpoint}/v1/health -> 200 {"status": "ok"}
  Errors: non-2xx with {"error": string}.
"""

from __future__ import annotations

import base64
import enum
import time
from dataclasses import dataclass, field
from urllib.parse import urlparse

import numpy as np
import requests

from .images import BadImage, ImageBuffer, decode_png, encode_alpha_png, encode_png
from .masks import AlphaMask, RleDecodeError, rle_decode
from .segmentation import (
    ClickPoint,
    MaskCandidate,
    Polarity,
    SegmentationParams,
    fallback_segment,
    sort_candidates,
)

DEFAULT_TIMEOUT_MS = 30_000
MAX_PROMPT_CHARS = 500
MAX_VARIANTS = 8
UINT64_MASK = 0xFFFFFFFFFFFFFFFF

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class GatewayError(Exception):
    pass


class BackendUnreachable(GatewayError):
    pass


class BackendTimeout(GatewayError):
    pass


class ProtocolError(GatewayError):
    pass


class InvalidRequest(GatewayError):
    pass


class BackendKind(enum.Enum):
    MOCK = "mock"
    HTTP = "http"


@dataclass(frozen=True)
class BackendRef:
    kind: BackendKind
    endpoint: str | None = None
    timeout_ms: int = DEFAULT_TIMEOUT_MS

    def __post_init__(self) -> None:
        if self.kind is BackendKind.HTTP:
            parsed = urlparse(self.endpoint or "")
            if parsed.scheme not in ("http", "https") or not parsed.netloc:
                raise ValueError(f"http backend needs an absolute URL, got {self.endpoint!r}")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")

    @classmethod
    def parse(cls, spec: str, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> "BackendRef":
        """Accepts "mock" or an absolute http(s) URL."""
        spec = spec.strip()
        if spec.lower() == "mock":
            return cls(kind=BackendKind.MOCK, timeout_ms=timeout_ms)
        return cls(kind=BackendKind.HTTP, endpoint=spec.rstrip("/"), timeout_ms=timeout_ms)

    @property
    def backend_id(self) -> str:
        return "mock" if self.kind is BackendKind.MOCK else str(self.endpoint)


@dataclass(frozen=True)
class InpaintRequest:
    image: ImageBuffer
    alpha: AlphaMask
    prompt: str
    seed: int
    num_variants: int = 3

    def __post_init__(self) -> None:
        if (self.alpha.width, self.alpha.height) != (self.image.width, self.image.height):
            raise InvalidRequest(
                f"alpha {self.alpha.width}x{self.alpha.height} does not match "
                f"image {self.image.width}x{self.image.height}"
            )
        prompt = self.prompt.strip()
        if not prompt:
            raise InvalidRequest("prompt is empty")
        if len(prompt) > MAX_PROMPT_CHARS:
            raise InvalidRequest(f"prompt exceeds {MAX_PROMPT_CHARS} characters")
        object.__setattr__(self, "prompt", prompt)
        if not 0 <= self.seed <= UINT64_MASK:
            raise InvalidRequest("seed must fit in 64 bits")
        if not 1 <= self.num_variants <= MAX_VARIANTS:
            raise InvalidRequest(f"num_variants must be 1..{MAX_VARIANTS}")


@dataclass(frozen=True)
class InpaintResult:
    variants: tuple[ImageBuffer, ...]
    backend_id: str
    elapsed_ms: int


@dataclass(frozen=True)
class HealthStatus:
    status: str  # "ok" | "degraded" | "down"
    detail: str | None = None


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & UINT64_MASK
    return h


def mix64(z: int) -> int:
    """splitmix64-style finalizer on a 64-bit word."""
    z &= UINT64_MASK
    z = ((z ^ (z >> 30)) * _MIX1) & UINT64_MASK
    z = ((z ^ (z >> 27)) * _MIX2) & UINT64_MASK
    return z ^ (z >> 31)


def _mock_fill(req: InpaintRequest, variant_index: int) -> ImageBuffer:
    """Procedural fill for one variant: every pixel with alpha > 0 gets bytes
    from mix64(fnv1a(prompt) ^ seed ^ (i * golden) ^ pixel_index); channel c
    takes byte c of the mixed word. Pixels with alpha 0 stay untouched."""
    masked = req.alpha.values.ravel() > 0
    out = req.image.pixels.copy()
    if masked.any():
        p = np.flatnonzero(masked).astype(np.uint64)
        base = fnv1a64(req.prompt.encode("utf-8")) ^ req.seed
        base ^= (variant_index * _GOLDEN) & UINT64_MASK
        z = np.uint64(base) ^ p
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        flat = out.reshape(-1, 3)
        flat[p, 0] = (z & np.uint64(0xFF)).astype(np.uint8)
        flat[p, 1] = ((z >> np.uint64(8)) & np.uint64(0xFF)).astype(np.uint8)
        flat[p, 2] = ((z >> np.uint64(16)) & np.uint64(0xFF)).astype(np.uint8)
    return ImageBuffer(out)


def _request(
    method: str,
    url: str,
    timeout_ms: int,
    json_body: dict | None = None,
) -> requests.Response:
    timeout_s = timeout_ms / 1000.0
    for attempt in range(2):
        try:
            return requests.request(method, url, json=json_body, timeout=timeout_s)
        except requests.Timeout as exc:
            raise BackendTimeout(f"{url}: no response within {timeout_ms}ms") from exc
        except requests.ConnectionError as exc:
            # One retry on connection failure, none on timeout.
            if attempt == 1:
                raise BackendUnreachable(f"{url}: {exc}") from exc
    raise AssertionError("unreachable")


def _wire_error(resp: requests.Response) -> str:
    try:
        return str(resp.json().get("error", resp.text))
    except ValueError:
        return resp.text


def _post(endpoint: str, path: str, body: dict, timeout_ms: int) -> dict:
    resp = _request("POST", f"{endpoint}{path}", timeout_ms, json_body=body)
    if resp.status_code >= 500:
        raise BackendUnreachable(f"{path}: server error {resp.status_code}: {_wire_error(resp)}")
    if not 200 <= resp.status_code < 300:
        raise ProtocolError(f"{path}: status {resp.status_code}: {_wire_error(resp)}")
    try:
        payload = resp.json()
    except ValueError as exc:
        raise ProtocolError(f"{path}: response is not JSON") from exc
    if not isinstance(payload, dict):
        raise ProtocolError(f"{path}: response is not a JSON object")
    return payload


def segment(
    backend: BackendRef,
    image: ImageBuffer,
    clicks: list[ClickPoint],
) -> list[MaskCandidate]:
    """Segmentation candidates for a click set, score descending. Candidate
    dimensions always match the input image."""
    if backend.kind is BackendKind.MOCK:
        return fallback_segment(image, clicks, SegmentationParams())

    body = {
        "image_png": base64.b64encode(encode_png(image)).decode("ascii"),
        "points": [
            {"x": c.x, "y": c.y, "label": 1 if c.polarity is Polarity.INCLUDE else 0}
            for c in clicks
        ],
    }
    payload = _post(backend.endpoint or "", "/v1/segment", body, backend.timeout_ms)
    raw_masks = payload.get("masks")
    if not isinstance(raw_masks, list):
        raise ProtocolError("segment response missing 'masks' list")
    candidates: list[MaskCandidate] = []
    for item in raw_masks:
        try:
            width, height = int(item["width"]), int(item["height"])
            score = float(item["score"])
            mask = rle_decode(list(item["rle"]), width, height)
        except (KeyError, TypeError, ValueError, RleDecodeError) as exc:
            raise ProtocolError(f"bad mask in segment response: {exc}") from exc
        if (width, height) != (image.width, image.height):
            raise ProtocolError(
                f"mask {width}x{height} does not match image {image.width}x{image.height}"
            )
        candidates.append(MaskCandidate(mask=mask, score=score))
    return sort_candidates(candidates)


def inpaint(backend: BackendRef, req: InpaintRequest) -> InpaintResult:
    """Generate req.num_variants redesign variants. Pixels whose request alpha
    is 0 are copied back from the source image, whatever the backend did."""
    start = time.monotonic()
    if backend.kind is BackendKind.MOCK:
        variants = tuple(_mock_fill(req, i) for i in range(req.num_variants))
    else:
        body = {
            "image_png": base64.b64encode(encode_png(req.image)).decode("ascii"),
            "mask_png": base64.b64encode(encode_alpha_png(req.alpha)).decode("ascii"),
            "prompt": req.prompt,
            "seed": req.seed,
            "num_images": req.num_variants,
        }
        payload = _post(backend.endpoint or "", "/v1/inpaint", body, backend.timeout_ms)
        raw_images = payload.get("images")
        if not isinstance(raw_images, list):
            raise ProtocolError("inpaint response missing 'images' list")
        if len(raw_images) != req.num_variants:
            raise ProtocolError(
                f"requested {req.num_variants} images, backend returned {len(raw_images)}"
            )
        decoded = []
        for b64 in raw_images:
            try:
                img = decode_png(base64.b64decode(b64))
            except (BadImage, ValueError, TypeError) as exc:
                raise ProtocolError(f"undecodable image in inpaint response: {exc}") from exc
            if (img.width, img.height) != (req.image.width, req.image.height):
                raise ProtocolError(
                    f"variant {img.width}x{img.height} does not match request "
                    f"{req.image.width}x{req.image.height}"
                )
            decoded.append(img)
        untouched = req.alpha.values == 0
        variants = tuple(_composite(req.image, img, untouched) for img in decoded)
    elapsed_ms = int((time.monotonic() - start) * 1000)
    return InpaintResult(variants=variants, backend_id=backend.backend_id, elapsed_ms=elapsed_ms)


def _composite(source: ImageBuffer, generated: ImageBuffer, untouched: np.ndarray) -> ImageBuffer:
    out = generated.pixels.copy()
    out[untouched] = source.pixels[untouched]
    return ImageBuffer(out)


def health_check(backend: BackendRef) -> HealthStatus:
    if backend.kind is BackendKind.MOCK:
        return HealthStatus(status="ok")
    try:
        resp = _request("GET", f"{backend.endpoint}/v1/health", backend.timeout_ms)
    except BackendTimeout as exc:
        return HealthStatus(status="down", detail=str(exc))
    except BackendUnreachable as exc:
        return HealthStatus(status="down", detail=str(exc))
    if resp.status_code == 200:
        return HealthStatus(status="ok")
    return HealthStatus(status="degraded", detail=f"status {resp.status_code}")


@dataclass(frozen=True)
class Gateway:
    """Immutable pair of backend handles; safe for concurrent use."""

    segmenter: BackendRef = field(default_factory=lambda: BackendRef(BackendKind.MOCK))
    inpainter: BackendRef = field(default_factory=lambda: BackendRef(BackendKind.MOCK))

    def segment(self, image: ImageBuffer, clicks: list[ClickPoint]) -> list[MaskCandidate]:
        return segment(self.segmenter, image, clicks)

    def inpaint(self, req: InpaintRequest) -> InpaintResult:
        return inpaint(self.inpainter, req)

    def health(self) -> dict[str, HealthStatus]:
        return {
            "segmenter": health_check(self.segmenter),
            "inpainter": health_check(self.inpainter),
        }
