"""Geometry sliding-window filtering of object point clouds.

Each observation of an object gets a bounding sphere (Monte-Carlo seeded,
Ritter-expanded) and the cone from the camera viewpoint that circumscribes
it. Over the last ``window_len`` observations every point collects ``+r_in``
for each cone containing it and ``-r_out`` for each cone that does not;
points with a positive total survive.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from dsmap.scene import PointCloud, SceneObject, SemanticCaption

log = logging.getLogger(__name__)

DEGENERATE_RADIUS = 1e-4
_CHUNK = 1 << 21  # max sample*point distance entries evaluated at once


@dataclass(frozen=True)
class WindowConfig:
    window_len: int = 5
    mc_samples: int = 512
    r_in: float = 1.0
    r_out: float = 1.0
    # fragment spheres grow by this many pixel footprints at their depth
    pixel_margin: float = 1.0

    def __post_init__(self):
        if self.window_len < 1:
            raise ValueError("window_len must be >= 1")
        if self.mc_samples < 32:
            raise ValueError("mc_samples must be >= 32")
        if not (self.r_in > 0 and self.r_out > 0):
            raise ValueError("r_in and r_out must be positive")
        if self.pixel_margin < 0:
            raise ValueError("pixel_margin must be >= 0")


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True)
class Cone:
    apex: tuple
    axis: tuple
    half_angle: float
    degenerate: bool = False


def _fallback_sphere(pts: np.ndarray) -> Sphere:
    center = pts.mean(axis=0)
    radius = float(np.sqrt(((pts - center) ** 2).sum(axis=1)).max())
    return Sphere(center, max(radius, DEGENERATE_RADIUS))


def _sq_dists(pts: np.ndarray, sq_norms: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = sq_norms[None, :] - 2.0 * centers @ pts.T + (centers ** 2).sum(axis=1)[:, None]
    return np.maximum(d2, 0.0)


def _ritter_expand(pts: np.ndarray, centers: np.ndarray, radii: np.ndarray, max_iter: int = 64):
    """Grow each (center, radius) until it encloses ``pts``, one farthest point at a time."""
    centers = centers.copy()
    radii = radii.copy()
    sq_norms = (pts ** 2).sum(axis=1)
    rows = np.arange(len(centers))
    for _ in range(max_iter):
        d2 = _sq_dists(pts, sq_norms, centers)
        far = d2.argmax(axis=1)
        dist = np.sqrt(d2[rows, far])
        outside = dist > radii * (1 + 1e-9)
        if not outside.any():
            break
        new_r = (radii[outside] + dist[outside]) / 2.0
        shift = (dist[outside] - radii[outside]) / 2.0 / dist[outside]
        centers[outside] += (pts[far[outside]] - centers[outside]) * shift[:, None]
        radii[outside] = new_r
    # the caller recomputes the exact radius of the winning center
    return centers, np.sqrt(_sq_dists(pts, sq_norms, centers).max(axis=1))


def _shrink(pts: np.ndarray, center: np.ndarray, iters: int = 200):
    """Badoiu-Clarkson steps toward the farthest point, keeping the best center seen."""
    best_c = center.copy()
    best_r = float(np.sqrt(((pts - center) ** 2).sum(axis=1)).max())
    c = center.copy()
    for i in range(1, iters + 1):
        d2 = ((pts - c) ** 2).sum(axis=1)
        far = d2.argmax()
        c = c + (pts[far] - c) / (i + 1)
        r = float(np.sqrt(((pts - c) ** 2).sum(axis=1)).max())
        if r < best_r:
            best_c, best_r = c.copy(), r
    return best_c, best_r


def hull_points(pts: np.ndarray) -> np.ndarray:
    """The convex-hull vertices of ``pts``.

    The farthest point of a cloud from any center is a hull vertex, so
    enclosing-sphere searches over the hull give the same spheres as over
    the full cloud. Flat and collinear clouds use a hull in their own
    subspace.
    """
    if len(pts) <= 16:
        return pts
    centered = pts - pts.mean(axis=0)
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int((sv > sv[0] * 1e-9).sum()) if sv[0] > 0 else 0
    if rank >= 3:
        try:
            return pts[ConvexHull(pts).vertices]
        except QhullError:
            rank = 2
    if rank == 2:
        try:
            return pts[ConvexHull(centered @ vt[:2].T).vertices]
        except QhullError:
            rank = 1
    along = centered @ vt[0]
    return pts[[int(along.argmin()), int(along.argmax())]]


def bounding_sphere(points, mc_samples: int = 512, seed=0) -> Sphere:
    """Monte-Carlo bounding sphere of a point set.

    Candidate centers are the centroids of random 4-point subsets; each is
    Ritter-expanded over the full cloud and the smallest result is refined.
    The returned sphere always contains every input point.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("bounding sphere of an empty point set")
    if len(pts) < 4:
        # a centroid start can overshoot by a third (two coincident points), so shrink it too
        start = _fallback_sphere(pts)
        if start.radius <= DEGENERATE_RADIUS:
            return start
        center, _ = _shrink(pts, np.asarray(start.center))
        radius = float(np.sqrt(((pts - center) ** 2).sum(axis=1)).max()) * (1 + 1e-12)
        return Sphere(center, max(radius, DEGENERATE_RADIUS))
    if np.ptp(pts, axis=0).max() == 0.0:
        return Sphere(pts[0], DEGENERATE_RADIUS)

    rng = np.random.default_rng(seed)
    subsets = rng.integers(0, len(pts), size=(mc_samples, 4))
    seeds = pts[subsets]
    pts = hull_points(pts)
    centers = seeds.mean(axis=1)
    radii = np.sqrt(((seeds - centers[:, None, :]) ** 2).sum(axis=2)).max(axis=1)

    best_c, best_r = None, math.inf
    step = max(1, _CHUNK // len(pts))
    for lo in range(0, mc_samples, step):
        c, r = _ritter_expand(pts, centers[lo:lo + step], radii[lo:lo + step])
        k = int(r.argmin())
        if r[k] < best_r:
            best_c, best_r = c[k], float(r[k])

    center, radius = _shrink(pts, best_c)
    radius = float(np.sqrt(((pts - center) ** 2).sum(axis=1)).max()) * (1 + 1e-12)
    return Sphere(center, max(radius, DEGENERATE_RADIUS))


def observation_cone(viewpoint, sphere: Sphere) -> Cone:
    apex = np.asarray(viewpoint, dtype=np.float64)
    offset = np.asarray(sphere.center) - apex
    dist = float(np.linalg.norm(offset))
    if dist <= sphere.radius:
        return Cone(tuple(apex), (0.0, 0.0, 1.0), math.pi, degenerate=True)
    return Cone(tuple(apex), tuple(offset / dist), math.asin(sphere.radius / dist))


def cone_contains_points(cone: Cone, points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if cone.degenerate:
        return np.ones(len(pts), dtype=bool)
    rel = pts - np.asarray(cone.apex)
    along = rel @ np.asarray(cone.axis)
    norm = np.sqrt((rel ** 2).sum(axis=1))
    inside = (along > 0) & (along >= norm * math.cos(cone.half_angle))
    return inside | (norm == 0.0)


def cone_contains(cone: Cone, p) -> bool:
    return bool(cone_contains_points(cone, np.asarray(p, dtype=np.float64)[None, :])[0])


@dataclass
class VoteResult:
    kept: PointCloud
    scores: np.ndarray
    mask: np.ndarray
    # index of the source fragment for every point of the union
    source: np.ndarray

    @property
    def empty(self) -> bool:
        return not self.mask.any()


def vote_scores(points, cones, cfg: WindowConfig) -> np.ndarray:
    scores = np.zeros(len(points))
    for cone in cones:
        inside = cone_contains_points(cone, points)
        scores += np.where(inside, cfg.r_in, -cfg.r_out)
    return scores


def vote_filter(fragments, cfg: WindowConfig) -> VoteResult:
    """Vote the union of windowed fragments against their observation cones.

    ``fragments`` is a list of (PointCloud, Cone) pairs. An empty ``kept``
    cloud means every point was voted out; callers treat that as a signal,
    not an error.
    """
    if not fragments:
        raise ValueError("vote_filter needs at least one fragment")
    union = PointCloud.concat([cloud for cloud, _ in fragments])
    source = np.concatenate([np.full(len(cloud), i) for i, (cloud, _) in enumerate(fragments)])
    scores = vote_scores(union.points, [cone for _, cone in fragments], cfg)
    mask = scores > 0
    return VoteResult(union.subset(mask), scores, mask, source)


def fragment_cone(frag) -> Cone:
    return observation_cone(frag.viewpoint, Sphere(frag.sphere_center, frag.sphere_radius))


def resolve_attributes(obj: SceneObject) -> SemanticCaption:
    """Caption of the fragment with the most surviving points; latest frame wins ties."""
    if not obj.fragments:
        return obj.caption
    best = max(obj.fragments, key=lambda f: (f.surviving, f.frame_id))
    return best.caption


@dataclass
class WindowUpdate:
    window_points: int
    dropped: int
    tentative: bool
    scores: np.ndarray


def apply_window(obj: SceneObject, cfg: WindowConfig) -> WindowUpdate:
    """Vote-filter the object's last ``window_len`` fragments in place and re-resolve its caption.

    Points from older fragments are frozen. If the vote would remove every
    windowed point the object is marked tentative and left unchanged.
    """
    window = obj.fragments[-cfg.window_len:]
    idx = np.concatenate([f.indices for f in window]) if window else np.zeros(0, dtype=np.int64)
    if len(idx) == 0:
        obj.tentative = True
        return WindowUpdate(0, 0, True, np.zeros(0))
    scores = vote_scores(obj.cloud.points[idx], [fragment_cone(f) for f in window], cfg)
    survive = scores > 0
    if not survive.any():
        log.info("object %d: window vote removed every point; marked tentative", obj.id)
        obj.tentative = True
        return WindowUpdate(len(idx), 0, True, scores)
    keep = np.ones(len(obj.cloud), dtype=bool)
    keep[idx[~survive]] = False
    dropped = int((~survive).sum())
    obj.tentative = False
    obj.keep_points(keep)
    obj.caption = resolve_attributes(obj)
    return WindowUpdate(len(idx), dropped, False, scores)
