"""The HTTP service: two routes, canonical JSON, strictly serial requests.

GET /health answers {"status": "ok", "model": <backend name>}. POST /segment
takes {"image_png": <base64 PNG>, "prompts": [{"u": int, "v": int}, ...]}
and returns {"masks": [{"rle": [...], "height": H, "width": W, "score": s}]},
one mask per prompt in request order. Malformed requests get 400 with an
error message; a server whose model failed to load answers 503.

Responses are serialized with sorted keys and fixed separators, so the same
request always produces byte-identical bodies. The server is a plain
single-threaded ``HTTPServer``: requests queue on the listen socket and are
handled first-in first-out, which is the right shape when every request
runs the same single model instance.
"""

import base64
import binascii
import io
import json
import logging
from http.server import BaseHTTPRequestHandler, HTTPServer
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from sam_bridge import rle
from sam_bridge.backends import load_backend

log = logging.getLogger("sam_bridge")

MAX_BODY_BYTES = 64 * 1024 * 1024


class RequestError(ValueError):
    """Client sent something the protocol does not allow."""


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _parse_request(raw: bytes) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    try:
        payload = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise RequestError(f"body is not JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise RequestError("body must be a JSON object")
    png_b64 = payload.get("image_png")
    if not isinstance(png_b64, str):
        raise RequestError("image_png must be a base64 string")
    try:
        png = base64.b64decode(png_b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise RequestError(f"image_png is not valid base64: {exc}") from exc
    try:
        with Image.open(io.BytesIO(png)) as img:
            rgb = np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise RequestError(f"image_png does not decode as an image: {exc}") from exc
    h, w = rgb.shape[:2]

    raw_prompts = payload.get("prompts")
    if not isinstance(raw_prompts, list):
        raise RequestError("prompts must be a list")
    prompts = []
    for i, entry in enumerate(raw_prompts):
        if not isinstance(entry, dict):
            raise RequestError(f"prompt {i} must be an object")
        u, v = entry.get("u"), entry.get("v")
        if isinstance(u, bool) or isinstance(v, bool) \
                or not isinstance(u, int) or not isinstance(v, int):
            raise RequestError(f"prompt {i} needs integer u and v")
        if not (0 <= u < w and 0 <= v < h):
            raise RequestError(f"prompt {i} at ({u}, {v}) is outside the {w}x{h} image")
        prompts.append((u, v))
    return rgb, prompts


class BridgeHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # route through logging, not stderr
        log.debug("%s " + fmt, self.address_string(), *args)

    def _reply(self, code: int, obj) -> None:
        body = _canonical(obj)
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path != "/health":
            self._reply(404, {"error": "unknown path"})
            return
        self._reply(200, {"status": "ok", "model": self.server.model_name})

    def do_POST(self):
        if self.path != "/segment":
            self._reply(404, {"error": "unknown path"})
            return
        if self.server.backend is None:
            self._reply(503, {"error": "model not loaded"})
            return
        length = int(self.headers.get("Content-Length", 0))
        if not 0 < length <= MAX_BODY_BYTES:
            self._reply(400, {"error": "missing or oversized body"})
            return
        try:
            rgb, prompts = _parse_request(self.rfile.read(length))
        except RequestError as exc:
            self._reply(400, {"error": str(exc)})
            return
        h, w = rgb.shape[:2]
        masks = self.server.backend.segment_scored(rgb, prompts)
        self._reply(
            200,
            {
                "masks": [
                    {
                        "rle": rle.encode(mask),
                        "height": h,
                        "width": w,
                        "score": round(float(score), 6),
                    }
                    for mask, score in masks
                ]
            },
        )


class BridgeServer(HTTPServer):
    """Single-threaded server owning one backend instance (or none)."""

    def __init__(self, address, backend, model_name: Optional[str] = None) -> None:
        super().__init__(address, BridgeHandler)
        self.backend = backend
        self.model_name = model_name or (backend.name if backend else "none")


def make_server(backend, host: str = "127.0.0.1", port: int = 0) -> BridgeServer:
    return BridgeServer((host, port), backend)


def serve(model_path: str = "", host: str = "127.0.0.1", port: int = 8760) -> None:
    """Load the model and answer requests until interrupted."""
    backend = load_backend(model_path)
    server = make_server(backend, host, port)
    log.info("serving %s on http://%s:%d", server.model_name, host, server.server_address[1])
    try:
        server.serve_forever()
    finally:
        server.server_close()
