import base64
import io
import json
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from recitygen_shim.app import ShimConfig, create_app

FIXTURES = Path(__file__).parent.parent / "fixtures"
REPO_ROOT = Path(__file__).parent.parent.parent
RLE_VECTORS_PATH = REPO_ROOT / "test_vectors" / "rle_vectors.json"


class FakeSegmenter:
    """Deterministic stand-in: one box mask around each foreground point."""

    def __init__(self, fail=False):
        self.fail = fail
        self.calls = []

    def predict(self, image, points):
        if self.fail:
            raise RuntimeError("model exploded")
        self.calls.append((image.shape, list(points)))
        h, w = image.shape[:2]
        masks = []
        for rank, (x, y, label) in enumerate(p for p in points if p[2] == 1):
            mask = np.zeros((h, w), dtype=bool)
            mask[max(0, y - 2) : min(h, y + 3), max(0, x - 2) : min(w, x + 3)] = True
            masks.append((mask, 0.9 - 0.1 * rank))
        return masks


class FakeInpainter:
    """Paints masked pixels with a flat seed-derived color."""

    def __init__(self, fail=False, wrong_count=False):
        self.fail = fail
        self.wrong_count = wrong_count
        self.calls = []

    def generate(self, image, alpha, prompt, seed, count):
        if self.fail:
            raise RuntimeError("pipeline out of memory")
        self.calls.append((prompt, seed, count))
        if self.wrong_count:
            count -= 1
        outputs = []
        for index in range(count):
            out = image.copy()
            color = ((seed * 37 + index * 11) % 256, (seed * 13) % 256, index % 256)
            out[alpha > 0] = color
            outputs.append(out)
        return outputs


@pytest.fixture
def fake_segmenter():
    return FakeSegmenter()


@pytest.fixture
def fake_inpainter():
    return FakeInpainter()


@pytest.fixture
def client(fake_segmenter, fake_inpainter):
    app = create_app(fake_segmenter, fake_inpainter, ShimConfig())
    with TestClient(app, raise_server_exceptions=False) as test_client:
        yield test_client


@pytest.fixture
def segment_request():
    return json.loads((FIXTURES / "segment_request.json").read_text())


@pytest.fixture
def inpaint_request():
    return json.loads((FIXTURES / "inpaint_request.json").read_text())


@pytest.fixture
def rle_vectors():
    return json.loads(RLE_VECTORS_PATH.read_text())


def png_b64(array: np.ndarray, mode: str) -> str:
    buf = io.BytesIO()
    Image.fromarray(array, mode).save(buf, "PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_rle(runs, width, height) -> np.ndarray:
    """Local reference decoder used to validate responses."""
    assert all(isinstance(r, int) and r >= 0 for r in runs)
    assert all(r > 0 for i, r in enumerate(runs) if i > 0)
    assert sum(runs) == width * height
    flat = []
    value = False
    for count in runs:
        flat.extend([value] * count)
        value = not value
    return np.array(flat, dtype=bool).reshape(height, width)
