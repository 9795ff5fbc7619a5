"""Deterministic stand-ins for the text and visual encoders.

Text: a pseudorandom unit vector seeded by the canonicalized text, so equal
strings embed identically and distinct strings are nearly orthogonal.
Image: a 256-bin color histogram (3 bits red, 3 bits green, 2 bits blue) over
the masked pixels, normalized to unit length.
"""
from __future__ import annotations

import hashlib

import numpy as np

from dsmap.errors import MaskError
from dsmap.text import canonical

TEXT_DIM = 256
HIST_BINS = 256


def embed_text(text: str, dim: int = TEXT_DIM) -> np.ndarray:
    canon = canonical(text or "")
    if not canon:
        raise ValueError("cannot embed empty text")
    digest = hashlib.sha256(canon.encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def color_histogram(pixels: np.ndarray) -> np.ndarray:
    pixels = np.asarray(pixels, dtype=np.uint8).reshape(-1, 3)
    r, g, b = pixels[:, 0] >> 5, pixels[:, 1] >> 5, pixels[:, 2] >> 6
    bins = (r.astype(np.int64) << 5) | (g.astype(np.int64) << 2) | b
    return np.bincount(bins, minlength=HIST_BINS).astype(np.float64)


def embed_image_crop(color_image, mask) -> np.ndarray:
    if mask.is_empty():
        raise MaskError("cannot embed an empty crop")
    u, v = mask.pixel_coords()
    hist = color_histogram(np.asarray(color_image)[v, u])
    return hist / np.linalg.norm(hist)


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"feature dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine of a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))
