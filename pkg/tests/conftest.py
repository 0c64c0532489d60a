import http.server
import json
import socket
import threading
import time
from pathlib import Path

import numpy as np
import pytest

from recitygen.images import ImageBuffer, encode_png

FIXTURES = Path(__file__).parent / "fixtures"
REPO_ROOT = Path(__file__).parent.parent
RLE_VECTORS_PATH = REPO_ROOT / "test_vectors" / "rle_vectors.json"


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture
def fixture_16x16_png() -> bytes:
    return (FIXTURES / "inpaint_16x16.png").read_bytes()


@pytest.fixture
def rle_vectors() -> list[dict]:
    return json.loads(RLE_VECTORS_PATH.read_text())


def uniform_image(width: int, height: int, rgb=(120, 120, 120)) -> ImageBuffer:
    return ImageBuffer.filled(width, height, rgb)


def uniform_png(width: int = 8, height: int = 8, rgb=(120, 120, 120)) -> bytes:
    return encode_png(uniform_image(width, height, rgb))


def two_region_image(width: int = 4, height: int = 2) -> ImageBuffer:
    """Left half black, right half white."""
    pixels = np.zeros((height, width, 3), dtype=np.uint8)
    pixels[:, width // 2 :] = 255
    return ImageBuffer(pixels)


class StubBackend:
    """Loopback wire-protocol stub with scriptable responses.

    Handlers return (status_code, json_payload). POST bodies are recorded in
    self.requests for assertion.
    """

    def __init__(self):
        self.requests: list[tuple[str, dict]] = []
        self.delay_s: float = 0.0
        self.health_status: int = 200
        self.on_segment = lambda body: (200, {"masks": []})
        self.on_inpaint = lambda body: (200, {"images": []})
        self._server: http.server.ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        assert self._server is not None
        return f"http://127.0.0.1:{self._server.server_address[1]}"

    def start(self) -> "StubBackend":
        stub = self

        class Handler(http.server.BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send(self, status: int, payload: dict):
                body = json.dumps(payload).encode("utf-8")
                try:
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                except (BrokenPipeError, ConnectionResetError):
                    pass  # client gave up (timeout tests)

            def do_GET(self):
                if stub.delay_s:
                    time.sleep(stub.delay_s)
                if self.path == "/v1/health":
                    self._send(stub.health_status, {"status": "ok"})
                else:
                    self._send(404, {"error": "no such path"})

            def do_POST(self):
                if stub.delay_s:
                    time.sleep(stub.delay_s)
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length) or b"{}")
                stub.requests.append((self.path, body))
                if self.path == "/v1/segment":
                    status, payload = stub.on_segment(body)
                elif self.path == "/v1/inpaint":
                    status, payload = stub.on_inpaint(body)
                else:
                    status, payload = 404, {"error": "no such path"}
                self._send(status, payload)

        self._server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()


@pytest.fixture
def stub_backend():
    stub = StubBackend().start()
    yield stub
    stub.stop()
