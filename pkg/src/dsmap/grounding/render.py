"""Multi-level point-splat rendering of candidate objects for the VLM."""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw

from dsmap.geometry import AABB_EDGES, Aabb3, look_at
from dsmap.scene import DsmMap

log = logging.getLogger(__name__)

LEVELS = ("object", "place", "scene")
BACKGROUND = (64, 64, 64)
HIGHLIGHT = np.array([255, 200, 0], dtype=np.float64)
BOX_COLOR = (255, 60, 60)
NEAR_PLANE = 1e-3
OBJECT_DISTANCE = 2.0  # x focus-object diagonal
PLACE_DISTANCE = 4.0   # x local-cluster diagonal
SCENE_MARGIN = 0.9     # fraction of the half-FOV tangent the scene may fill
MAX_RENDER_POINTS = 300_000


@dataclass
class RenderSpec:
    pose: np.ndarray
    level: str
    fov_deg: float = 60.0
    width: int = 768
    height: int = 768
    highlight_ids: tuple = ()

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"unknown render level {self.level!r}")
        self.pose = np.asarray(self.pose, dtype=np.float64)
        self.highlight_ids = tuple(int(i) for i in self.highlight_ids)

    def focal(self) -> float:
        return (self.height / 2.0) / math.tan(math.radians(self.fov_deg) / 2.0)

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "pose": [[round(float(v), 9) for v in row] for row in self.pose],
            "fov_deg": round(float(self.fov_deg), 9),
            "width": self.width,
            "height": self.height,
            "highlight_ids": list(self.highlight_ids),
        }


@dataclass
class RenderedView:
    image: np.ndarray
    spec: RenderSpec
    warnings: list = field(default_factory=list)

    def save(self, path) -> None:
        Image.fromarray(self.image).save(path, format="PNG")


def _placement_dir(anchor_center: np.ndarray, scene_center: np.ndarray) -> np.ndarray:
    d = anchor_center - scene_center
    n = np.linalg.norm(d)
    if n < 1e-6:
        return np.array([1.0, 0.0, 0.0])
    return d / n


def _fit_distance(anchor: np.ndarray, direction: np.ndarray, boxes, fov_deg: float) -> float:
    """Smallest offset along ``direction`` from which every box corner is in frame."""
    tan_h = math.tan(math.radians(fov_deg) / 2.0) * SCENE_MARGIN
    need = 0.0
    for box in boxes:
        for corner in box.corners():
            d = corner - anchor
            along = float(d @ direction)
            lateral = float(np.linalg.norm(d - along * direction))
            need = max(need, along + lateral / tan_h)
    return need


def _inside_any(point: np.ndarray, boxes) -> bool:
    return any(np.all(point >= b.lo) and np.all(point <= b.hi) for b in boxes)


def place_camera(anchor_center, scene_center, level: str, dsm: DsmMap, focus_diag: float = 1.0,
                 cluster_ids=None, fov_deg: float = 60.0) -> np.ndarray:
    """Camera-to-world pose on the ray from the scene center through the anchor, looking at the anchor.

    Distance from the anchor: 2x ``focus_diag`` at object level, 4x the
    diagonal of the cluster boxes at place level, and at scene level far
    enough that every object box fits the frustum.
    """
    anchor = np.asarray(anchor_center, dtype=np.float64)
    direction = _placement_dir(anchor, np.asarray(scene_center, dtype=np.float64))
    boxes = [dsm.objects[k].bbox for k in sorted(dsm.objects)]
    if level == "object":
        dist = OBJECT_DISTANCE * focus_diag
    elif level == "place":
        ids = sorted(cluster_ids) if cluster_ids else sorted(dsm.objects)
        cluster = [dsm.objects[k].bbox for k in ids if k in dsm.objects]
        diag = focus_diag
        if cluster:
            union = cluster[0]
            for b in cluster[1:]:
                union = union.union(b)
            diag = max(union.diagonal, focus_diag)
        dist = PLACE_DISTANCE * diag
    elif level == "scene":
        dist = max(_fit_distance(anchor, direction, boxes, fov_deg), 2.0 * focus_diag) if boxes else focus_diag
    else:
        raise ValueError(f"unknown render level {level!r}")
    dist = max(dist, 1e-3)
    eye = anchor + dist * direction
    for _ in range(100):
        if not _inside_any(eye, boxes):
            break
        dist *= 1.1
        eye = anchor + dist * direction
    return look_at(eye, anchor)


def _object_color(obj_id: int) -> np.ndarray:
    digest = hashlib.sha256(str(obj_id).encode()).digest()
    return np.array([96 + digest[0] % 128, 96 + digest[1] % 128, 96 + digest[2] % 128], dtype=np.float64)


def project_to_image(points: np.ndarray, spec: RenderSpec):
    """Pixel coordinates and depth for world points (camera frame x right, y down, z forward)."""
    rot, t = spec.pose[:3, :3], spec.pose[:3, 3]
    cam = (np.asarray(points, dtype=np.float64) - t) @ rot
    z = cam[:, 2]
    f = spec.focal()
    with np.errstate(divide="ignore", invalid="ignore"):
        u = f * cam[:, 0] / z + spec.width / 2.0
        v = f * cam[:, 1] / z + spec.height / 2.0
    return u, v, z


def render_level(dsm: DsmMap, topk_ids, spec: RenderSpec, max_points: int = MAX_RENDER_POINTS) -> RenderedView:
    """Point-splat render: 3x3 px splats, z-buffered, candidates tinted and boxed with id tags.

    Maps larger than ``max_points`` are thinned with a fixed per-object stride first.
    """
    W, H = spec.width, spec.height
    image = np.empty((H, W, 3), dtype=np.uint8)
    image[:] = BACKGROUND
    warnings = []
    highlight = set(int(i) for i in topk_ids)
    total = sum(len(o.cloud) for o in dsm.objects.values())
    stride = max(1, -(-total // max_points))
    pts, cols = [], []
    for oid in sorted(dsm.objects):
        obj = dsm.objects[oid]
        p = obj.cloud.points[::stride].astype(np.float64)
        if obj.cloud.colors is not None:
            c = obj.cloud.colors[::stride].astype(np.float64)
        else:
            c = np.broadcast_to(_object_color(oid), p.shape).copy()
        if oid in highlight:
            c = 0.5 * c + 0.5 * HIGHLIGHT
        pts.append(p)
        cols.append(c)
    drawn = 0
    if pts:
        points = np.concatenate(pts)
        colors = np.concatenate(cols).round().astype(np.uint8)
        u, v, z = project_to_image(points, spec)
        front = z > NEAR_PLANE
        ui = np.floor(u[front]).astype(np.int64)
        vi = np.floor(v[front]).astype(np.int64)
        zf, cf = z[front], colors[front]
        pix_all, z_all, c_all = [], [], []
        for dv in (-1, 0, 1):
            for du in (-1, 0, 1):
                uu, vv = ui + du, vi + dv
                ok = (uu >= 0) & (uu < W) & (vv >= 0) & (vv < H)
                pix_all.append(vv[ok] * W + uu[ok])
                z_all.append(zf[ok])
                c_all.append(cf[ok])
        pix = np.concatenate(pix_all)
        if len(pix):
            depth = np.concatenate(z_all)
            color = np.concatenate(c_all)
            zbuf = np.full(W * H, np.inf)
            np.minimum.at(zbuf, pix, depth)
            # among entries at the nearest depth, the lowest index wins
            win = np.flatnonzero(depth == zbuf[pix])
            first = np.full(W * H, len(pix), dtype=np.int64)
            np.minimum.at(first, pix[win], win)
            covered = np.flatnonzero(first < len(pix))
            image.reshape(-1, 3)[covered] = color[first[covered]]
            drawn = len(covered)
    if drawn == 0:
        warnings.append("blank view: no map point projects inside the frame")
    if highlight:
        image = _draw_boxes(image, dsm, sorted(highlight), spec)
    return RenderedView(image, spec, warnings)


def _draw_boxes(image: np.ndarray, dsm: DsmMap, ids, spec: RenderSpec) -> np.ndarray:
    im = Image.fromarray(image)
    draw = ImageDraw.Draw(im)
    for oid in ids:
        if oid not in dsm.objects:
            continue
        corners = dsm.objects[oid].bbox.corners()
        u, v, z = project_to_image(corners, spec)
        if np.any(z <= NEAR_PLANE):
            continue
        for a, b in AABB_EDGES:
            draw.line([(u[a], v[a]), (u[b], v[b])], fill=BOX_COLOR, width=1)
        top = int(np.argmin(v))
        draw.text((float(u[top]) + 2, float(v[top]) - 12), str(oid), fill=(255, 255, 255))
    return np.asarray(im).copy()
