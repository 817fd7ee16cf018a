"""Shared fixtures: a stub wire-protocol server with switchable behaviors."""

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest


class StubHandler(BaseHTTPRequestHandler):
    """Canned responses for client-side protocol tests."""

    behavior = "uniform"
    vocab_size = 4

    def log_message(self, *args):
        pass

    def _send(self, code, payload):
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/v1/health":
            self._send(
                200,
                {"status": "ok", "vocab_size": self.vocab_size, "mask_id": self.vocab_size},
            )
        else:
            self._send(404, {"error": "not found"})

    def do_POST(self):
        n = int(self.headers.get("Content-Length", 0))
        req = json.loads(self.rfile.read(n))
        length = len(req["tokens"])
        v = self.vocab_size
        if self.behavior == "uniform":
            probs = [[1.0 / v] * v for _ in range(length)]
        elif self.behavior == "slightly_off":
            probs = [[(1.0 + 0.0005) / v] * v for _ in range(length)]
        elif self.behavior == "badly_off":
            probs = [[0.5 / v] * v for _ in range(length)]
        elif self.behavior == "short":
            probs = [[1.0 / v] * v for _ in range(length - 1)]
        else:
            self._send(200, {"weird": 1})
            return
        self._send(200, {"probs": probs})


@pytest.fixture()
def stub_server():
    httpd = ThreadingHTTPServer(("127.0.0.1", 0), StubHandler)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{httpd.server_address[1]}"
    httpd.shutdown()
