"""Run-length encoded binary masks over row-major pixel indices."""
from __future__ import annotations

import numpy as np

from dsmap.errors import MaskError


class Mask2d:
    """Foreground pixel set stored as sorted, disjoint (start, length) runs.

    ``start`` is the row-major pixel index ``v * width + u``.
    """

    __slots__ = ("width", "height", "runs")

    def __init__(self, width: int, height: int, runs=()):
        self.width = int(width)
        self.height = int(height)
        if self.width <= 0 or self.height <= 0:
            raise MaskError(f"mask size must be positive, got {width}x{height}")
        runs = np.asarray(runs, dtype=np.int64).reshape(-1, 2)
        runs = runs[runs[:, 1] > 0]
        if len(runs):
            if np.any(runs[:, 0] < 0) or np.any(runs[:, 0] + runs[:, 1] > self.width * self.height):
                raise MaskError("mask run out of image bounds")
            ends = runs[:, 0] + runs[:, 1]
            if np.any(runs[1:, 0] < ends[:-1]):
                raise MaskError("mask runs must be sorted and non-overlapping")
        self.runs = _merge_adjacent(runs)

    def __repr__(self) -> str:
        return f"Mask2d({self.width}x{self.height}, runs={len(self.runs)}, area={self.area})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mask2d):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.runs, other.runs)
        )

    @property
    def area(self) -> int:
        return int(self.runs[:, 1].sum()) if len(self.runs) else 0

    def is_empty(self) -> bool:
        return len(self.runs) == 0

    @classmethod
    def full(cls, width: int, height: int) -> "Mask2d":
        return cls(width, height, [(0, width * height)])

    @classmethod
    def from_dense(cls, dense) -> "Mask2d":
        dense = np.asarray(dense, dtype=bool)
        if dense.ndim != 2:
            raise MaskError("dense mask must be 2-D")
        height, width = dense.shape
        flat = np.concatenate([[False], dense.ravel(), [False]]).astype(np.int8)
        edges = np.flatnonzero(np.diff(flat))
        starts, stops = edges[0::2], edges[1::2]
        return cls(width, height, np.stack([starts, stops - starts], axis=1))

    def to_dense(self) -> np.ndarray:
        flat = np.zeros(self.width * self.height, dtype=bool)
        for start, length in self.runs:
            flat[start:start + length] = True
        return flat.reshape(self.height, self.width)

    def pixel_indices(self) -> np.ndarray:
        if self.is_empty():
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([np.arange(s, s + n) for s, n in self.runs])

    def pixel_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Column (u) and row (v) arrays of every foreground pixel."""
        idx = self.pixel_indices()
        return idx % self.width, idx // self.width

    def bbox(self) -> tuple[int, int, int, int]:
        """Tight (x, y, w, h) box around the foreground; raises on an empty mask."""
        if self.is_empty():
            raise MaskError("empty mask has no bounding box")
        u, v = self.pixel_coords()
        return int(u.min()), int(v.min()), int(u.max() - u.min() + 1), int(v.max() - v.min() + 1)

    def intersect(self, other: "Mask2d") -> "Mask2d":
        return intersect_masks(self, other)

    def to_dict(self) -> dict:
        return {"size": [self.width, self.height], "runs": self.runs.tolist()}

    @classmethod
    def from_dict(cls, d: dict, width: int | None = None, height: int | None = None) -> "Mask2d":
        if "size" in d:
            width, height = d["size"]
        if width is None or height is None:
            raise MaskError("mask record lacks a size and none was supplied")
        return cls(width, height, d.get("runs", []))


def _merge_adjacent(runs: np.ndarray) -> np.ndarray:
    if len(runs) < 2:
        return runs.copy()
    out = [list(runs[0])]
    for start, length in runs[1:]:
        last = out[-1]
        if start == last[0] + last[1]:
            last[1] += length
        else:
            out.append([start, length])
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def intersect_masks(a: Mask2d, b: Mask2d) -> Mask2d:
    """Pixelwise intersection by a merge sweep over both run lists."""
    if (a.width, a.height) != (b.width, b.height):
        raise MaskError(f"mask size mismatch: {a.width}x{a.height} vs {b.width}x{b.height}")
    out = []
    i = j = 0
    ra, rb = a.runs, b.runs
    while i < len(ra) and j < len(rb):
        a0, a1 = ra[i, 0], ra[i, 0] + ra[i, 1]
        b0, b1 = rb[j, 0], rb[j, 0] + rb[j, 1]
        lo, hi = max(a0, b0), min(a1, b1)
        if lo < hi:
            out.append((lo, hi - lo))
        if a1 <= b1:
            i += 1
        else:
            j += 1
    return Mask2d(a.width, a.height, out)
