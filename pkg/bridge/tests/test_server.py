"""Wire-protocol conformance against a live in-process server."""

import base64
import importlib.util
import io
import json
import os
import threading
import urllib.error
import urllib.request

import numpy as np
import pytest
from PIL import Image

from sam_bridge import rle
from sam_bridge.backends import BUILTIN, RegionGrowBackend, SamBackend, load_backend
from sam_bridge.server import make_server

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures")


def _read(name: str) -> bytes:
    with open(os.path.join(FIXTURES, name), "rb") as f:
        return f.read()


class ServerHandle:
    def __init__(self, backend):
        self.server = make_server(backend)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()
        self.base = f"http://127.0.0.1:{self.server.server_address[1]}"

    def close(self):
        self.server.shutdown()
        self.server.server_close()
        self.thread.join()

    def get(self, path):
        try:
            with urllib.request.urlopen(self.base + path, timeout=10) as resp:
                return resp.status, resp.read()
        except urllib.error.HTTPError as exc:
            return exc.code, exc.read()

    def post(self, path, body: bytes):
        req = urllib.request.Request(
            self.base + path,
            data=body,
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=10) as resp:
                return resp.status, resp.read()
        except urllib.error.HTTPError as exc:
            return exc.code, exc.read()


@pytest.fixture(scope="module")
def server():
    handle = ServerHandle(RegionGrowBackend())
    yield handle
    handle.close()


def _request_body(rgb: np.ndarray, prompts) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    return json.dumps(
        {
            "image_png": base64.b64encode(buf.getvalue()).decode("ascii"),
            "prompts": [{"u": int(u), "v": int(v)} for u, v in prompts],
        }
    ).encode("utf-8")


def _two_panel_image() -> np.ndarray:
    rgb = np.zeros((40, 60, 3), dtype=np.uint8)
    rgb[5:25, 5:25] = (180, 40, 40)
    rgb[15:35, 35:55] = (40, 150, 210)
    return rgb


class TestHealth:
    def test_health_shape(self, server):
        code, body = server.get("/health")
        assert code == 200
        assert json.loads(body) == {"status": "ok", "model": BUILTIN}

    def test_unknown_path(self, server):
        code, _ = server.get("/nope")
        assert code == 404


class TestGolden:
    def test_golden_round_trip_is_bit_exact(self, server):
        code, body = server.post("/segment", _read("golden_request.json"))
        assert code == 200
        assert body == _read("golden_response.json")

    def test_repeated_requests_return_identical_bodies(self, server):
        request = _read("golden_request.json")
        bodies = {server.post("/segment", request)[1] for _ in range(3)}
        assert len(bodies) == 1

    def test_fresh_server_reproduces_the_golden_bytes(self):
        handle = ServerHandle(RegionGrowBackend())
        try:
            _, body = handle.post("/segment", _read("golden_request.json"))
        finally:
            handle.close()
        assert body == _read("golden_response.json")

    def test_golden_masks_honor_protocol_invariants(self):
        request = json.loads(_read("golden_request.json"))
        response = json.loads(_read("golden_response.json"))
        masks = response["masks"]
        assert len(masks) == len(request["prompts"])
        for prompt, entry in zip(request["prompts"], masks):
            assert sum(entry["rle"]) == entry["height"] * entry["width"]
            mask = rle.decode(entry["rle"], entry["height"], entry["width"])
            if mask.any():
                assert mask[prompt["v"], prompt["u"]]


class TestSegment:
    def test_mask_per_prompt_in_request_order(self, server):
        rgb = _two_panel_image()
        forward = [(10, 10), (40, 20), (0, 0)]
        _, body_fwd = server.post("/segment", _request_body(rgb, forward))
        _, body_rev = server.post("/segment", _request_body(rgb, forward[::-1]))
        masks_fwd = json.loads(body_fwd)["masks"]
        masks_rev = json.loads(body_rev)["masks"]
        assert [m["rle"] for m in masks_rev] == [m["rle"] for m in masks_fwd[::-1]]

    def test_every_nonempty_mask_contains_its_prompt(self, server):
        rgb = _two_panel_image()
        prompts = [(u, v) for v in range(0, 40, 7) for u in range(0, 60, 9)]
        _, body = server.post("/segment", _request_body(rgb, prompts))
        masks = json.loads(body)["masks"]
        assert len(masks) == len(prompts)
        nonempty = 0
        for (u, v), entry in zip(prompts, masks):
            mask = rle.decode(entry["rle"], entry["height"], entry["width"])
            assert mask.shape == rgb.shape[:2]
            if mask.any():
                nonempty += 1
                assert mask[v, u]
                assert entry["score"] == 1.0
            else:
                assert entry["score"] == 0.0
        assert nonempty > 0

    def test_panels_segment_to_their_exact_extent(self, server):
        rgb = _two_panel_image()
        _, body = server.post("/segment", _request_body(rgb, [(10, 10), (40, 20)]))
        masks = json.loads(body)["masks"]
        red = rle.decode(masks[0]["rle"], 40, 60)
        blue = rle.decode(masks[1]["rle"], 40, 60)
        np.testing.assert_array_equal(red, np.all(rgb == (180, 40, 40), axis=2))
        np.testing.assert_array_equal(blue, np.all(rgb == (40, 150, 210), axis=2))

    def test_zero_prompts_allowed(self, server):
        _, body = server.post("/segment", _request_body(_two_panel_image(), []))
        assert json.loads(body) == {"masks": []}


class TestMalformedRequests:
    def _expect_400(self, server, body: bytes, fragment: str):
        code, payload = server.post("/segment", body)
        assert code == 400
        assert fragment in json.loads(payload)["error"]

    def test_body_not_json(self, server):
        self._expect_400(server, b"{nope", "not JSON")

    def test_missing_image(self, server):
        self._expect_400(server, b'{"prompts": []}', "image_png")

    def test_image_not_base64(self, server):
        self._expect_400(server, b'{"image_png": "!!!", "prompts": []}', "base64")

    def test_image_not_png(self, server):
        blob = base64.b64encode(b"not an image").decode("ascii")
        self._expect_400(
            server,
            json.dumps({"image_png": blob, "prompts": []}).encode(),
            "decode",
        )

    def test_prompts_not_a_list(self, server):
        request = json.loads(_read("golden_request.json"))
        request["prompts"] = {"u": 1, "v": 1}
        self._expect_400(server, json.dumps(request).encode(), "list")

    def test_prompt_not_an_object(self, server):
        request = json.loads(_read("golden_request.json"))
        request["prompts"] = [[3, 4]]
        self._expect_400(server, json.dumps(request).encode(), "object")

    def test_prompt_coordinates_must_be_integers(self, server):
        request = json.loads(_read("golden_request.json"))
        for bad in ({"u": 1.5, "v": 2}, {"u": 1}, {"u": True, "v": 2}):
            request["prompts"] = [bad]
            self._expect_400(server, json.dumps(request).encode(), "integer")

    def test_prompt_outside_image(self, server):
        request = json.loads(_read("golden_request.json"))
        request["prompts"] = [{"u": 48, "v": 0}]
        self._expect_400(server, json.dumps(request).encode(), "outside")

    def test_empty_body(self, server):
        self._expect_400(server, b"", "body")


class TestModelNotLoaded:
    def test_segment_answers_503(self):
        handle = ServerHandle(None)
        try:
            code, body = handle.post("/segment", _read("golden_request.json"))
            assert code == 503
            assert json.loads(body) == {"error": "model not loaded"}
            code, body = handle.get("/health")
            assert code == 200
            assert json.loads(body)["model"] == "none"
        finally:
            handle.close()


class TestBackendSelection:
    def test_empty_and_builtin_select_the_fallback(self):
        assert isinstance(load_backend(""), RegionGrowBackend)
        assert isinstance(load_backend("builtin"), RegionGrowBackend)

    @pytest.mark.skipif(
        importlib.util.find_spec("segment_anything") is not None,
        reason="real model package installed",
    )
    def test_sam_backend_names_the_missing_extra(self):
        with pytest.raises(RuntimeError, match="sam"):
            SamBackend("/no/such/checkpoint.pth")

    @pytest.mark.skipif(
        importlib.util.find_spec("segment_anything") is None,
        reason="segment_anything not installed",
    )
    def test_real_model_smoke(self, tmp_path):
        checkpoint = os.environ.get("SAM_MODEL_PATH")
        if not checkpoint or not os.path.isfile(checkpoint):
            pytest.skip("no checkpoint available")
        backend = load_backend(checkpoint)
        rgb = _two_panel_image()
        masks = backend.segment_scored(rgb, [(10, 10)])
        assert len(masks) == 1
        assert masks[0][0].shape == rgb.shape[:2]
