"""Run-length codec for binary masks on the wire.

Masks travel row-major as alternating run lengths, always starting with a
run of zeros, so the first integer is 0 whenever the mask's first pixel is
set. Runs sum to height x width exactly.
"""

from typing import List, Sequence

import numpy as np


def encode(mask: np.ndarray) -> List[int]:
    """Row-major alternating run lengths, leading zero-run first."""
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return []
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate([[0], boundaries, [flat.size]])
    runs = np.diff(edges).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def decode(runs: Sequence[int], height: int, width: int) -> np.ndarray:
    """Inverse of :func:`encode`; rejects runs that do not tile the image."""
    runs = list(runs)
    if any(isinstance(r, bool) or not isinstance(r, int) or r < 0 for r in runs):
        raise ValueError("runs must be non-negative integers")
    total = sum(runs)
    if total != height * width:
        raise ValueError(f"runs sum to {total}, expected {height * width}")
    values = np.zeros(len(runs), dtype=bool)
    values[1::2] = True
    return np.repeat(values, runs).reshape(height, width)
