"""Ray-cast synthetic RGB-D sequences with exact masks and a ground-truth map.

A scene spec is a JSON-compatible dict::

    {
      "image": {"width": 320, "height": 240, "vfov_deg": 60},
      "camera": {"orbit": {"center": [0, 0, 0.4], "radius": 2.0, "height": 1.2,
                           "frames": 12, "start_deg": 0, "sweep_deg": 360}},
      "depth_noise_mm": 0,
      "objects": [
        {"name": "mug", "shape": "box", "center": [..], "size": [..],
         "color": [r, g, b], "appearance": "...", "physical": "...",
         "affordance": "...", "class": "mug",
         "relations": [{"anchor": 3, "semantic": "..."}]},
        {"name": "ball", "shape": "sphere", "center": [..], "radius": 0.1, ...}
      ]
    }

``camera`` may instead give explicit ``"poses"`` (4x4 camera-to-world) or
``"look_at"`` entries (``{"eye": [..], "target": [..]}``). Relation anchors
are object indices.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dsmap.errors import SceneSpecError
from dsmap.geometry import Aabb3, intersection_volume, look_at
from dsmap.ingest.frames import CameraIntrinsics, Detection2d, FrameRecord, save_color, save_depth, write_sequence
from dsmap.ingest.masks import Mask2d
from dsmap.ingest.unproject import unproject
from dsmap.mapio import save_map
from dsmap.perception.encoders import color_histogram, embed_text
from dsmap.relations import describe_relation
from dsmap.scene import DsmMap, PointCloud, Relation, SceneObject, SemanticCaption

log = logging.getLogger(__name__)

BACKGROUND_COLOR = (24, 24, 24)
MIN_MASK_PIXELS = 20
GT_VOXEL = 0.005


@dataclass(frozen=True)
class Primitive:
    name: str
    shape: str
    center: np.ndarray
    size: np.ndarray  # full extents for boxes, (r, r, r) * 2 for spheres
    color: tuple
    caption: SemanticCaption
    cls: str
    relations: tuple

    @property
    def radius(self) -> float:
        return float(self.size[0]) / 2.0

    @property
    def aabb(self) -> Aabb3:
        half = self.size / 2.0
        return Aabb3(tuple(self.center - half), tuple(self.center + half))

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Smallest positive ray parameter per direction, inf on a miss."""
        if self.shape == "box":
            lo = self.center - self.size / 2.0
            hi = self.center + self.size / 2.0
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = 1.0 / dirs
                t1 = (lo - origin) * inv
                t2 = (hi - origin) * inv
            t_near = np.nanmax(np.minimum(t1, t2), axis=1)
            t_far = np.nanmin(np.maximum(t1, t2), axis=1)
            hit = (t_far >= t_near) & (t_far > 0)
            t = np.where(t_near > 0, t_near, t_far)
            return np.where(hit, t, np.inf)
        oc = origin - self.center
        a = (dirs ** 2).sum(axis=1)
        b = 2.0 * dirs @ oc
        c = float(oc @ oc) - self.radius ** 2
        disc = b * b - 4 * a * c
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t0 = (-b - sq) / (2 * a)
        t1 = (-b + sq) / (2 * a)
        t = np.where(t0 > 0, t0, t1)
        return np.where(ok & (t > 0), t, np.inf)


def _vec(value, n, what):
    arr = np.asarray(value, dtype=np.float64).reshape(-1)
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise SceneSpecError(f"{what} must be {n} finite numbers")
    return arr


def parse_objects(spec: dict) -> list:
    objs = spec.get("objects")
    if not objs:
        raise SceneSpecError("scene spec lists no objects")
    out = []
    for i, o in enumerate(objs):
        try:
            name = str(o["name"]).strip().lower()
            shape = o.get("shape", "box")
            center = _vec(o["center"], 3, f"object {i} center")
            if shape == "box":
                size = _vec(o["size"], 3, f"object {i} size")
            elif shape == "sphere":
                size = np.full(3, 2.0 * float(o["radius"]))
            else:
                raise SceneSpecError(f"object {i}: unknown shape {shape!r}")
            if not np.all(size > 0):
                raise SceneSpecError(f"object {i}: extents must be positive")
            color = tuple(int(c) for c in o["color"])
            if len(color) != 3 or not all(0 <= c <= 255 for c in color):
                raise SceneSpecError(f"object {i}: color must be three 0-255 ints")
            caption = SemanticCaption(name, o.get("appearance", ""), o.get("physical", ""), o.get("affordance", ""))
            rels = tuple((int(r["anchor"]), str(r.get("semantic", ""))) for r in o.get("relations", []))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SceneSpecError):
                raise
            raise SceneSpecError(f"object {i}: {exc}") from exc
        out.append(Primitive(name, shape, center, size, color, caption, str(o.get("class", name)), rels))
    for i, p in enumerate(out):
        for anchor, _ in p.relations:
            if not 0 <= anchor < len(out) or anchor == i:
                raise SceneSpecError(f"object {i}: relation anchor {anchor} is not another object")
    _check_overlaps(out)
    return out


def _overlap(a: Primitive, b: Primitive) -> bool:
    if a.shape == "sphere" and b.shape == "sphere":
        return float(np.linalg.norm(a.center - b.center)) < a.radius + b.radius - 1e-9
    if a.shape == "box" and b.shape == "box":
        return intersection_volume(a.aabb, b.aabb) > 0
    box, ball = (a, b) if a.shape == "box" else (b, a)
    closest = np.clip(ball.center, box.aabb.lo, box.aabb.hi)
    return float(np.linalg.norm(closest - ball.center)) < ball.radius - 1e-9


def _check_overlaps(prims) -> None:
    for i in range(len(prims)):
        for j in range(i + 1, len(prims)):
            if _overlap(prims[i], prims[j]):
                raise SceneSpecError(f"objects {i} ({prims[i].name}) and {j} ({prims[j].name}) overlap")


def camera_poses(spec: dict) -> list:
    cam = spec.get("camera") or {}
    if "poses" in cam:
        return [np.asarray(p, dtype=np.float64) for p in cam["poses"]]
    if "look_at" in cam:
        return [look_at(e["eye"], e["target"]) for e in cam["look_at"]]
    orbit = cam.get("orbit")
    if orbit is None:
        raise SceneSpecError("camera needs an orbit, look_at list or poses")
    n = int(orbit.get("frames", 10))
    if n < 1:
        raise SceneSpecError("orbit needs at least one frame")
    center = _vec(orbit.get("center", (0, 0, 0)), 3, "orbit center")
    radius = float(orbit.get("radius", 2.0))
    height = float(orbit.get("height", 1.0))
    start = np.radians(float(orbit.get("start_deg", 0.0)))
    sweep = np.radians(float(orbit.get("sweep_deg", 360.0)))
    poses = []
    for i in range(n):
        theta = start + sweep * i / n
        eye = center + np.array([radius * np.cos(theta), radius * np.sin(theta), height])
        poses.append(look_at(eye, center))
    return poses


def intrinsics_of(spec: dict) -> CameraIntrinsics:
    img = spec.get("image") or {}
    return CameraIntrinsics.from_fov(int(img.get("width", 320)), int(img.get("height", 240)),
                                     float(img.get("vfov_deg", 60.0)))


def pixel_rays(intr: CameraIntrinsics, pose: np.ndarray) -> np.ndarray:
    """World-frame ray directions through pixel (u, v), scaled so the ray parameter is camera depth."""
    v, u = np.mgrid[0:intr.height, 0:intr.width]
    cam = np.stack([(u.ravel() - intr.cx) / intr.fx, (v.ravel() - intr.cy) / intr.fy,
                    np.ones(u.size)], axis=1)
    return cam @ pose[:3, :3].T


def raycast(prims, intr: CameraIntrinsics, pose: np.ndarray):
    """Per-pixel depth in metres (inf on background) and hit object index (-1 on background)."""
    origin = pose[:3, 3]
    dirs = pixel_rays(intr, pose)
    hits = np.stack([p.intersect(origin, dirs) for p in prims], axis=0)
    ids = hits.argmin(axis=0)
    depth = hits[ids, np.arange(dirs.shape[0])]
    ids = np.where(np.isfinite(depth), ids, -1)
    return depth.reshape(intr.height, intr.width), ids.reshape(intr.height, intr.width)


def render_frame(prims, intr, pose, rng=None, noise_mm: float = 0.0):
    """Color, stored depth (mm, optionally noisy), hit ids and the noiseless depth (mm)."""
    depth_m, ids = raycast(prims, intr, pose)
    exact = np.clip(np.where(np.isfinite(depth_m), np.round(depth_m * 1000.0), 0.0), 0, 65535)
    depth_mm = exact
    if noise_mm > 0 and rng is not None:
        depth_mm = np.where(exact > 0, np.round(exact + rng.normal(0, noise_mm, exact.shape)), 0)
    depth_mm = np.clip(depth_mm, 0, 65535).astype(np.uint16)
    color = np.empty((intr.height, intr.width, 3), dtype=np.uint8)
    color[:] = BACKGROUND_COLOR
    for k, p in enumerate(prims):
        color[ids == k] = p.color
    return color, depth_mm, ids, exact.astype(np.uint16)


def _caption_hint(prim: Primitive, visible: set, prims) -> dict:
    hint = prim.caption.to_dict()
    hint["relations"] = [
        {"anchor": prims[a].name, "spatial": "close by", "semantic": text}
        for a, text in prim.relations if a in visible
    ]
    return hint


@dataclass
class SynthResult:
    frames: list
    gt: DsmMap
    manifest: Path
    gt_path: Path


def _voxel_unique(points: np.ndarray, colors: np.ndarray, voxel: float):
    keys = np.floor(points / voxel).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    first.sort()
    return points[first], colors[first]


def synth_scene(spec: dict, out_dir, seed: int = 0) -> SynthResult:
    """Render the spec's trajectory into ``out_dir`` (manifest.jsonl, frames/, gt.dsm)."""
    spec = copy.deepcopy(spec)
    prims = parse_objects(spec)
    intr = intrinsics_of(spec)
    poses = camera_poses(spec)
    noise = float(spec.get("depth_noise_mm", 0.0))
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir)
    (out_dir / "frames").mkdir(parents=True, exist_ok=True)
    classes = sorted({p.cls for p in prims})
    gt_points = [[] for _ in prims]
    gt_colors = [[] for _ in prims]
    frames = []
    for fid, pose in enumerate(poses):
        color, depth_mm, ids, exact = render_frame(prims, intr, pose, rng, noise)
        color_ref = out_dir / "frames" / f"color_{fid:04d}.png"
        depth_ref = out_dir / "frames" / f"depth_{fid:04d}.png"
        save_color(color_ref, color)
        save_depth(depth_ref, depth_mm)
        visible = [k for k in range(len(prims)) if int((ids == k).sum()) >= MIN_MASK_PIXELS]
        dets = []
        for k in visible:
            mask = Mask2d.from_dense(ids == k)
            dets.append(Detection2d(prims[k].name, mask.bbox(), mask, None, 1.0,
                                    _caption_hint(prims[k], set(visible), prims)))
            # ground truth uses the noiseless surface
            cloud = unproject(exact, intr, pose, mask, color)
            gt_points[k].append(cloud.points)
            gt_colors[k].append(cloud.colors)
        frames.append(FrameRecord(fid, float(fid), intr, pose, color_ref, depth_ref, dets))
    manifest = out_dir / "manifest.jsonl"
    write_sequence(manifest, frames)
    gt = ground_truth_map(prims, gt_points, gt_colors, classes, seed)
    gt_path = out_dir / "gt.dsm"
    save_map(gt, gt_path)
    return SynthResult(frames, gt, manifest, gt_path)


def ground_truth_map(prims, gt_points, gt_colors, classes, seed: int = 0) -> DsmMap:
    objects = []
    for k, p in enumerate(prims):
        if gt_points[k]:
            pts, cols = _voxel_unique(np.concatenate(gt_points[k]), np.concatenate(gt_colors[k]), GT_VOXEL)
        else:
            # never seen: fall back to the box corners so the object still has extent
            pts = Aabb3(tuple(p.aabb.lo), tuple(p.aabb.hi)).corners()
            cols = np.tile(np.array(p.color, dtype=np.uint8), (len(pts), 1))
        labels = np.full(len(pts), classes.index(p.cls), dtype=np.int32)
        hist = color_histogram(np.array([p.color], dtype=np.uint8))
        objects.append(SceneObject(
            id=k,
            caption=p.caption,
            cloud=PointCloud(pts, cols, labels),
            f_v=hist / np.linalg.norm(hist),
            f_s=embed_text(p.caption.text()),
            finalized=True,
        ))
    dsm = DsmMap(objects, config_snapshot={"classes": classes, "seed": seed, "synthetic": True})
    for k, p in enumerate(prims):
        for a, text in p.relations:
            dist, desc = describe_relation(dsm.objects[k].bbox, dsm.objects[a].bbox, dsm.scene_center)
            dsm.add_relation(Relation(k, a, dist, desc, text, [(0, text)]))
    return dsm
