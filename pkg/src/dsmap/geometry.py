"""Axis-aligned boxes and small rigid-body helpers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Aabb3:
    """Axis-aligned box in the world frame, given by its min and max corners."""

    min: tuple[float, float, float]
    max: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.min)
        hi = tuple(float(v) for v in self.max)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("Aabb3 corners must have 3 coordinates")
        if not all(np.isfinite(lo + hi)):
            raise ValueError("Aabb3 corners must be finite")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"Aabb3 min {lo} exceeds max {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def from_points(cls, points) -> "Aabb3":
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            raise ValueError("cannot bound an empty point set")
        return cls(tuple(pts.min(axis=0)), tuple(pts.max(axis=0)))

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.min)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.max)

    @property
    def center(self) -> np.ndarray:
        return (self.lo + self.hi) / 2.0

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))

    def corners(self) -> np.ndarray:
        """The 8 corners, indexed by the bit pattern (x, y, z) -> x | y << 1 | z << 2."""
        lo, hi = self.lo, self.hi
        out = np.empty((8, 3))
        for i in range(8):
            out[i] = [hi[0] if i & 1 else lo[0], hi[1] if i & 2 else lo[1], hi[2] if i & 4 else lo[2]]
        return out

    def union(self, other: "Aabb3") -> "Aabb3":
        return Aabb3(tuple(np.minimum(self.lo, other.lo)), tuple(np.maximum(self.hi, other.hi)))

    def to_dict(self) -> dict:
        return {"min": list(self.min), "max": list(self.max)}

    @classmethod
    def from_dict(cls, d: dict) -> "Aabb3":
        return cls(tuple(d["min"]), tuple(d["max"]))


# Box edges as corner-index pairs, for wireframe drawing.
AABB_EDGES = (
    (0, 1), (2, 3), (4, 5), (6, 7),
    (0, 2), (1, 3), (4, 6), (5, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
)


def intersection_volume(a: Aabb3, b: Aabb3) -> float:
    overlap = np.minimum(a.hi, b.hi) - np.maximum(a.lo, b.lo)
    if np.any(overlap <= 0):
        return 0.0
    return float(np.prod(overlap))


def aabb_iou(a: Aabb3, b: Aabb3) -> float:
    """Volumetric intersection over union of two boxes.

    Zero-volume boxes have IoU 1 with an identical box and 0 with anything else.
    """
    va, vb = a.volume, b.volume
    if va <= 0.0 or vb <= 0.0:
        return 1.0 if a == b else 0.0
    inter = intersection_volume(a, b)
    union = va + vb - inter
    return min(1.0, max(0.0, inter / union))


def aabb_contains(inner: Aabb3, outer: Aabb3) -> bool:
    """Closed containment: every face of ``inner`` lies on or inside ``outer``."""
    return all(i >= o for i, o in zip(inner.min, outer.min)) and all(
        i <= o for i, o in zip(inner.max, outer.max)
    )


def transform_points(pose: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a 4x4 homogeneous transform to an (N, 3) array."""
    pose = np.asarray(pose, dtype=np.float64)
    return np.asarray(points, dtype=np.float64) @ pose[:3, :3].T + pose[:3, 3]


def invert_pose(pose: np.ndarray) -> np.ndarray:
    pose = np.asarray(pose, dtype=np.float64)
    rot = pose[:3, :3]
    out = np.eye(4)
    out[:3, :3] = rot.T
    out[:3, 3] = -rot.T @ pose[:3, 3]
    return out


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world pose for a camera at ``eye`` looking at ``target``.

    The camera frame follows the pinhole convention used for unprojection:
    x right, y down, z forward.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("look_at: eye and target coincide")
    forward /= norm
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        # looking straight along the up axis; any horizontal right vector works
        right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    pose = np.eye(4)
    pose[:3, 0] = right
    pose[:3, 1] = down
    pose[:3, 2] = forward
    pose[:3, 3] = eye
    return pose
