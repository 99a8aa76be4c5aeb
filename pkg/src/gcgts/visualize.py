"""Grayscale export of the pair channel: darker pixel = higher pair probability."""

from __future__ import annotations

import math

import numpy as np

from .corpus import P

# comment line naming the exported label channel
HEADER_COMMENT = b"# P\n"


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def pgm_bytes(prob: np.ndarray) -> bytes:
    """Binary P5 image of an n×n probability matrix (rows: aspect axis)."""
    prob = np.asarray(prob, dtype=np.float64)
    if prob.ndim != 2 or prob.shape[0] != prob.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {prob.shape}")
    n = prob.shape[0]
    pixels = bytes(min(255, max(0, round_half_away(255.0 * (1.0 - float(v)))))
                   for v in prob.reshape(-1))
    return b"P5\n" + HEADER_COMMENT + f"{n} {n}\n255\n".encode("ascii") + pixels


def pair_channel(probs: np.ndarray) -> np.ndarray:
    return np.asarray(probs)[..., P]


def write_pgm(path, prob: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(pgm_bytes(prob))
