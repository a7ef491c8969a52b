"""Segmentation backends behind one tiny interface.

``RegionGrowBackend`` is pure numpy and fully deterministic; it exists so
the service (and its golden fixtures) run anywhere with no model weights.
``SamBackend`` wraps the pre-trained promptable segmentation model and only
imports its heavyweight dependencies when actually selected, so the package
installs and tests without them.
"""

import logging
from typing import List, Sequence, Tuple

import numpy as np

log = logging.getLogger("sam_bridge")

#: Per-channel byte tolerance between adjacent pixels for the region grower.
GROW_TOLERANCE = 12

BUILTIN = "builtin-region"


class RegionGrowBackend:
    """4-connected color region growing from each prompt pixel.

    A neighbor joins when every channel differs from the adjacent in-region
    pixel by at most ``tolerance`` (local gradient, so smooth shading stays
    in one region). Pure black pixels mark no-data and never join; a prompt
    on black yields the empty mask with score 0.
    """

    name = BUILTIN

    def __init__(self, tolerance: int = GROW_TOLERANCE) -> None:
        self.tolerance = int(tolerance)

    def segment_scored(
        self, rgb: np.ndarray, prompts: Sequence[Tuple[int, int]]
    ) -> List[Tuple[np.ndarray, float]]:
        out = []
        for u, v in prompts:
            mask = self._grow(rgb, u, v)
            out.append((mask, 1.0 if mask.any() else 0.0))
        return out

    def _grow(self, rgb: np.ndarray, u: int, v: int) -> np.ndarray:
        h, w = rgb.shape[:2]
        img = rgb.astype(np.int16)
        valid = rgb.any(axis=2)
        region = np.zeros((h, w), dtype=bool)
        if not valid[v, u]:
            return region
        region[v, u] = True
        frontier = region.copy()
        tol = self.tolerance
        while frontier.any():
            grown = np.zeros((h, w), dtype=bool)
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                src_r = slice(max(0, -dr), min(h, h - dr))
                src_c = slice(max(0, -dc), min(w, w - dc))
                dst_r = slice(max(0, dr), min(h, h + dr))
                dst_c = slice(max(0, dc), min(w, w + dc))
                step = np.abs(img[dst_r, dst_c] - img[src_r, src_c]).max(axis=2)
                join = frontier[src_r, src_c] & (step <= tol)
                grown[dst_r, dst_c] |= join
            frontier = grown & valid & ~region
            region |= frontier
        return region


class SamBackend:
    """One point-prompted prediction per prompt, best candidate by model score."""

    name = "sam_vit_b"

    def __init__(self, checkpoint_path: str, model_type: str = "vit_b") -> None:
        try:
            import torch
            from segment_anything import SamPredictor, sam_model_registry
        except ImportError as exc:
            raise RuntimeError(
                "SamBackend needs the 'sam' extra: pip install 'sam-bridge[sam]'"
            ) from exc
        # pin everything that could wobble between identical requests
        torch.manual_seed(0)
        try:
            torch.use_deterministic_algorithms(True, warn_only=True)
        except TypeError:
            torch.use_deterministic_algorithms(True)
        self._torch = torch
        model = sam_model_registry[model_type](checkpoint=checkpoint_path)
        model.eval()
        self._predictor = SamPredictor(model)
        self.name = f"sam_{model_type}"
        log.info("loaded %s from %s (deterministic inference)", self.name, checkpoint_path)

    def segment_scored(
        self, rgb: np.ndarray, prompts: Sequence[Tuple[int, int]]
    ) -> List[Tuple[np.ndarray, float]]:
        self._predictor.set_image(rgb)
        out = []
        with self._torch.no_grad():
            for u, v in prompts:
                masks, scores, _ = self._predictor.predict(
                    point_coords=np.array([[u, v]], dtype=np.float64),
                    point_labels=np.array([1]),
                    multimask_output=True,
                )
                best = int(np.argmax(scores))
                out.append((masks[best].astype(bool), float(scores[best])))
        return out


def load_backend(model_path: str):
    """Backend for a model path; empty or ``builtin`` selects the fallback."""
    if not model_path or model_path == "builtin":
        log.info("using %s backend (deterministic, no weights)", BUILTIN)
        return RegionGrowBackend()
    return SamBackend(model_path)
