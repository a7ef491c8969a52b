"""Prompted segmentation behind one interface, two backends.

The reference backend is a deterministic 4-connected region grower over the
rendered range and value channels, good enough to exercise the whole
pipeline offline. The bridge backend speaks HTTP to an external service
wrapping a promptable segmentation model; the wire format is pinned here
(base64 PNG in, run-length-encoded masks out) so either side can be swapped
independently.

Both backends honor the same contract: one mask per prompt, in prompt
order, and any mask that fails to contain its own prompt pixel is replaced
by an empty mask rather than propagated.
"""

from __future__ import annotations

import base64
import io
import json
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from PIL import Image

from laserchange.prompting import Prompt
from laserchange.render import HsvImage, RenderedView

#: Adjacent pixels whose ranges differ by more than this never merge.
TAU_RANGE = 0.3
#: Value-channel tolerance as a fraction of the 255 byte scale.
TAU_INTENSITY = 0.1


class SegmentationError(RuntimeError):
    """Base class for segmentation backend failures."""


class BackendUnavailableError(SegmentationError):
    """The external segmentation service cannot be reached."""


class MalformedResponseError(SegmentationError):
    """The external service answered, but not in the agreed format."""


@dataclass(frozen=True)
class BinaryMask:
    """One segmentation result; empty means rejected or failed."""

    mask: np.ndarray  # (H, W) bool
    prompt: Prompt

    def __post_init__(self) -> None:
        if self.mask.ndim != 2 or self.mask.dtype != np.bool_:
            raise ValueError("mask must be a 2D boolean array")
        self.mask.setflags(write=False)

    @property
    def area(self) -> int:
        return int(self.mask.sum())

    @property
    def is_empty(self) -> bool:
        return not self.mask.any()


@dataclass(frozen=True)
class MaskSet:
    """Masks index-aligned with the prompts that produced them."""

    masks: List[BinaryMask] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.masks)

    def __iter__(self):
        return iter(self.masks)

    def __getitem__(self, i: int) -> BinaryMask:
        return self.masks[i]


def enforce_prompt_containment(mask: np.ndarray, prompt: Prompt) -> BinaryMask:
    """Drop masks that do not cover their own prompt pixel.

    Downstream matching assumes each mask is anchored at its prompt; a model
    is free to return anything, so the contract is enforced here.
    """
    if mask.any() and not mask[prompt.v, prompt.u]:
        mask = np.zeros_like(mask)
    return BinaryMask(mask=mask, prompt=prompt)


class Segmenter:
    """Interface: one binary mask per prompt, prompt order preserved."""

    def segment(self, image: HsvImage, view: RenderedView, prompts: Sequence[Prompt]) -> MaskSet:
        raise NotImplementedError


class ReferenceSegmenter(Segmenter):
    """Deterministic region growing on range and value channels.

    A 4-neighbor joins the region when both its range and its value-channel
    byte sit within tolerance of the *adjacent* pixel already in the region
    (a local gradient criterion, so slowly varying surfaces segment as one
    piece). Pixels without data never join. The grown region is the full
    path-connected closure, which makes the result independent of which
    region pixel seeded it.
    """

    def __init__(self, tau_range: float = TAU_RANGE, tau_intensity: float = TAU_INTENSITY) -> None:
        if tau_range < 0.0 or tau_intensity < 0.0:
            raise ValueError("tolerances must be non-negative")
        self.tau_range = tau_range
        self.tau_intensity = tau_intensity

    def segment(self, image: HsvImage, view: RenderedView, prompts: Sequence[Prompt]) -> MaskSet:
        masks = [
            enforce_prompt_containment(self._grow(image, view, p), p) for p in prompts
        ]
        return MaskSet(masks)

    def _grow(self, image: HsvImage, view: RenderedView, prompt: Prompt) -> np.ndarray:
        h, w = view.shape
        if image.pixels.shape[:2] != (h, w):
            raise ValueError("image and view dimensions differ")
        if not (0 <= prompt.u < w and 0 <= prompt.v < h):
            raise ValueError(f"prompt {prompt} outside image bounds")

        region = np.zeros(h * w, dtype=bool)
        if not view.valid[prompt.v, prompt.u]:
            return region.reshape(h, w)

        valid = view.valid.ravel()
        rng = view.range_z.ravel()
        val = image.value.astype(np.int16).ravel()
        tol_v = self.tau_intensity * 255.0

        seed = prompt.v * w + prompt.u
        region[seed] = True
        frontier = np.array([seed], dtype=np.int64)
        while frontier.size:
            grown = []
            for step, gate in (
                (-w, frontier >= w),
                (w, frontier < (h - 1) * w),
                (-1, frontier % w != 0),
                (1, frontier % w != w - 1),
            ):
                src = frontier[gate]
                dst = src + step
                ok = valid[dst] & ~region[dst]
                ok &= np.abs(rng[dst] - rng[src]) <= self.tau_range
                ok &= np.abs(val[dst] - val[src]) <= tol_v
                grown.append(dst[ok])
            nxt = np.unique(np.concatenate(grown)) if grown else np.zeros(0, np.int64)
            nxt = nxt[~region[nxt]]
            region[nxt] = True
            frontier = nxt
        return region.reshape(h, w)


# -- run-length mask codec ---------------------------------------------------
#
# Row-major, alternating run lengths, always starting with a run of zeros
# (which may have length 0). The runs must sum to exactly H*W.


def encode_rle(mask: np.ndarray) -> List[int]:
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return []
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate([[0], boundaries, [flat.size]])
    runs = np.diff(edges).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def decode_rle(runs: Sequence[int], height: int, width: int) -> np.ndarray:
    runs = list(runs)
    if any((not isinstance(r, int)) or r < 0 for r in runs):
        raise ValueError("runs must be non-negative integers")
    total = sum(runs)
    if total != height * width:
        raise ValueError(f"runs sum to {total}, expected {height * width}")
    values = np.zeros(len(runs), dtype=bool)
    values[1::2] = True
    return np.repeat(values, runs).reshape(height, width)


class BridgeSegmenter(Segmenter):
    """HTTP client for an external prompted-segmentation service.

    Protocol: ``POST {endpoint}/segment`` with JSON
    ``{"image_png": <base64 RGB PNG>, "prompts": [{"u": int, "v": int}, ...]}``;
    the response carries one RLE mask per prompt, in order. ``GET /health``
    reports readiness. Connection failures and 5xx responses are retried
    before giving up with :class:`BackendUnavailableError`; anything that
    parses wrong raises :class:`MalformedResponseError`.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        retries: int = 2,
        retry_wait: float = 0.25,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.retry_wait = retry_wait

    def health(self) -> dict:
        try:
            with urllib.request.urlopen(self.endpoint + "/health", timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError) as exc:
            raise BackendUnavailableError(f"health check failed: {exc}") from exc
        except ValueError as exc:
            raise MalformedResponseError(f"health payload is not JSON: {exc}") from exc
        if payload.get("status") != "ok":
            raise BackendUnavailableError(f"service not ready: {payload!r}")
        return payload

    def segment(self, image: HsvImage, view: RenderedView, prompts: Sequence[Prompt]) -> MaskSet:
        if not prompts:
            return MaskSet([])
        h, w = image.pixels.shape[:2]
        body = json.dumps(
            {
                "image_png": base64.b64encode(self._png_bytes(image)).decode("ascii"),
                "prompts": [{"u": p.u, "v": p.v} for p in prompts],
            }
        ).encode("utf-8")
        payload = self._post_with_retries(body)
        masks = payload.get("masks") if isinstance(payload, dict) else None
        if not isinstance(masks, list) or len(masks) != len(prompts):
            got = len(masks) if isinstance(masks, list) else "none"
            raise MalformedResponseError(
                f"expected {len(prompts)} masks, got {got}"
            )
        out = []
        for prompt, entry in zip(prompts, masks):
            out.append(enforce_prompt_containment(self._decode_entry(entry, h, w), prompt))
        return MaskSet(out)

    @staticmethod
    def _png_bytes(image: HsvImage) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(image.to_rgb(), mode="RGB").save(buf, format="PNG")
        return buf.getvalue()

    def _post_with_retries(self, body: bytes) -> dict:
        request = urllib.request.Request(
            self.endpoint + "/segment",
            data=body,
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        last: Exception = BackendUnavailableError("no attempt made")
        for attempt in range(self.retries + 1):
            try:
                with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                    raw = resp.read()
                try:
                    return json.loads(raw.decode("utf-8"))
                except (UnicodeDecodeError, ValueError) as exc:
                    raise MalformedResponseError(f"response is not JSON: {exc}") from exc
            except urllib.error.HTTPError as exc:
                if exc.code >= 500:
                    last = exc  # transient server trouble: retry
                else:
                    raise MalformedResponseError(
                        f"service rejected request: HTTP {exc.code}"
                    ) from exc
            except (urllib.error.URLError, OSError) as exc:
                last = exc
            if attempt < self.retries:
                time.sleep(self.retry_wait)
        raise BackendUnavailableError(f"service unreachable after {self.retries + 1} attempts: {last}")

    @staticmethod
    def _decode_entry(entry, height: int, width: int) -> np.ndarray:
        if not isinstance(entry, dict):
            raise MalformedResponseError("mask entry is not an object")
        if entry.get("height") != height or entry.get("width") != width:
            raise MalformedResponseError(
                f"mask is {entry.get('width')}x{entry.get('height')}, image is {width}x{height}"
            )
        rle = entry.get("rle")
        if not isinstance(rle, list):
            raise MalformedResponseError("mask entry lacks an rle list")
        try:
            return decode_rle(rle, height, width)
        except ValueError as exc:
            raise MalformedResponseError(str(exc)) from exc
