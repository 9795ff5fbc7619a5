"""DSM data model: per-object geometry (DSM-G) and semantics (DSM-S)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from dsmap.geometry import Aabb3

RELATION_DESCRIPTORS = (
    "near",
    "on",
    "above",
    "below",
    "inside",
    "left-of",
    "right-of",
    "in-front-of",
    "behind",
)


@dataclass(frozen=True)
class SemanticCaption:
    """Short name tag plus the appearance, physical and affordance descriptions."""

    name: str
    appearance: str = ""
    physical: str = ""
    affordance: str = ""

    def __post_init__(self):
        if not self.name or not self.name.strip():
            raise ValueError("caption name must be non-empty")

    @property
    def is_name_only(self) -> bool:
        return not (self.appearance or self.physical or self.affordance)

    def text(self) -> str:
        """All caption fields joined; this is what the text encoder sees."""
        parts = [self.name, self.appearance, self.physical, self.affordance]
        return ". ".join(p.strip() for p in parts if p and p.strip())

    def label_sentence(self) -> str:
        return (
            f"This is {self.name}, its appearance attributes include {self.appearance}, "
            f"its physical attributes are {self.physical}, "
            f"and its affordance attributes are {self.affordance}."
        )

    def name_only(self) -> "SemanticCaption":
        return SemanticCaption(self.name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "appearance": self.appearance,
            "physical": self.physical,
            "affordance": self.affordance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SemanticCaption":
        return cls(
            d["name"],
            d.get("appearance", ""),
            d.get("physical", ""),
            d.get("affordance", ""),
        )


class PointCloud:
    """Points with optional per-point RGB colors and integer class labels."""

    def __init__(self, points, colors=None, labels=None):
        pts = np.asarray(points)
        if pts.dtype.kind != "f":
            pts = pts.astype(np.float64)
        pts = pts.reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        self.points = pts
        self.colors = None
        self.labels = None
        if colors is not None:
            colors = np.asarray(colors)
            if colors.shape != (len(pts), 3):
                raise ValueError(f"colors shape {colors.shape} does not match {len(pts)} points")
            self.colors = np.clip(colors, 0, 255).astype(np.uint8)
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int32).reshape(-1)
            if len(labels) != len(pts):
                raise ValueError(f"{len(labels)} labels for {len(pts)} points")
            self.labels = labels

    def __len__(self) -> int:
        return len(self.points)

    def __repr__(self) -> str:
        return f"PointCloud(n={len(self)}, colors={self.colors is not None}, labels={self.labels is not None})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        return (
            _arrays_equal(self.points, other.points)
            and _arrays_equal(self.colors, other.colors)
            and _arrays_equal(self.labels, other.labels)
        )

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3), dtype=np.float32))

    def astype(self, dtype) -> "PointCloud":
        return PointCloud(self.points.astype(dtype), self.colors, self.labels)

    def subset(self, index) -> "PointCloud":
        return PointCloud(
            self.points[index],
            None if self.colors is None else self.colors[index],
            None if self.labels is None else self.labels[index],
        )

    def bbox(self) -> Aabb3:
        return Aabb3.from_points(self.points)

    def centroid(self) -> np.ndarray:
        return self.points.astype(np.float64).mean(axis=0)

    @staticmethod
    def concat(clouds: Iterable["PointCloud"]) -> "PointCloud":
        clouds = list(clouds)
        if not clouds:
            return PointCloud.empty()
        pts = np.concatenate([c.points for c in clouds])
        colors = labels = None
        if all(c.colors is not None for c in clouds):
            colors = np.concatenate([c.colors for c in clouds])
        if all(c.labels is not None for c in clouds):
            labels = np.concatenate([c.labels for c in clouds])
        return PointCloud(pts, colors, labels)


def _arrays_equal(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.dtype == b.dtype and a.shape == b.shape and np.array_equal(a, b)


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0 or not np.isfinite(n):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / n


@dataclass(eq=False)
class Fragment:
    """One observation of an object: where it was seen from and which points it contributed.

    ``indices`` index into the owning object's cloud and shrink as vote
    filtering removes points; ``observed`` keeps the raw count.
    """

    frame_id: int
    viewpoint: tuple
    indices: np.ndarray
    caption: SemanticCaption
    sphere_center: tuple
    sphere_radius: float
    observed: int

    def __post_init__(self):
        self.viewpoint = tuple(float(v) for v in self.viewpoint)
        self.sphere_center = tuple(float(v) for v in self.sphere_center)
        self.sphere_radius = float(self.sphere_radius)
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)

    @property
    def surviving(self) -> int:
        return len(self.indices)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Fragment):
            return NotImplemented
        return (
            self.frame_id == other.frame_id
            and self.viewpoint == other.viewpoint
            and _arrays_equal(self.indices, other.indices)
            and self.caption == other.caption
            and self.sphere_center == other.sphere_center
            and self.sphere_radius == other.sphere_radius
            and self.observed == other.observed
        )


@dataclass(eq=False)
class SceneObject:
    id: int
    caption: SemanticCaption
    cloud: PointCloud
    f_v: np.ndarray
    f_s: np.ndarray
    fragments: list = field(default_factory=list)
    tentative: bool = False
    finalized: bool = False

    def __post_init__(self):
        if len(self.cloud) == 0:
            raise ValueError(f"object {self.id} has an empty point cloud")
        if self.cloud.points.dtype != np.float32:
            self.cloud = self.cloud.astype(np.float32)
        self.f_v = np.asarray(self.f_v, dtype=np.float64)
        self.f_s = np.asarray(self.f_s, dtype=np.float64)
        for name in ("f_v", "f_s"):
            norm = np.linalg.norm(getattr(self, name))
            if abs(norm - 1.0) > 1e-6:
                raise ValueError(f"object {self.id}: {name} has norm {norm}, expected 1")
        frame_ids = [f.frame_id for f in self.fragments]
        if frame_ids != sorted(frame_ids):
            raise ValueError(f"object {self.id}: fragments out of frame order")

    @property
    def name(self) -> str:
        return self.caption.name

    @property
    def bbox(self) -> Aabb3:
        # clouds are replaced, never edited in place, so the cache keys on identity
        cache = self.__dict__.get("_bbox_cache")
        if cache is None or cache[0] is not self.cloud:
            cache = (self.cloud, self.cloud.bbox())
            self.__dict__["_bbox_cache"] = cache
        return cache[1]

    @property
    def last_frame_id(self) -> Optional[int]:
        return self.fragments[-1].frame_id if self.fragments else None

    def keep_points(self, keep: np.ndarray) -> None:
        """Drop every point where ``keep`` is False, remapping fragment indices."""
        keep = np.asarray(keep, dtype=bool)
        if keep.all():
            return
        new_index = np.cumsum(keep) - 1
        for frag in self.fragments:
            survivors = frag.indices[keep[frag.indices]]
            frag.indices = new_index[survivors]
        self.cloud = self.cloud.subset(keep)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SceneObject):
            return NotImplemented
        return (
            self.id == other.id
            and self.caption == other.caption
            and self.cloud == other.cloud
            and _arrays_equal(self.f_v, other.f_v)
            and _arrays_equal(self.f_s, other.f_s)
            and len(self.fragments) == len(other.fragments)
            and all(a == b for a, b in zip(self.fragments, other.fragments))
            and self.tentative == other.tentative
            and self.finalized == other.finalized
        )


@dataclass
class Relation:
    """Directed relation from ``subject_id`` to ``anchor_id``.

    ``observations`` is the (frame_id, text) history the semantic text is
    resolved from; ``r_s`` holds the current winner.
    """

    subject_id: int
    anchor_id: int
    r_g_distance: float
    r_g_descriptor: str
    r_s: str
    observations: list = field(default_factory=list)

    def __post_init__(self):
        if self.subject_id == self.anchor_id:
            raise ValueError("a relation needs two distinct objects")
        if not self.r_g_distance >= 0:
            raise ValueError(f"relation distance must be >= 0, got {self.r_g_distance}")
        if self.r_g_descriptor not in RELATION_DESCRIPTORS:
            raise ValueError(f"unknown relation descriptor {self.r_g_descriptor!r}")
        self.r_g_distance = float(self.r_g_distance)
        self.observations = [(int(f), str(t)) for f, t in self.observations]

    @property
    def key(self) -> tuple:
        return (self.subject_id, self.anchor_id)


class DsmMap:
    """Objects keyed by id plus directed relations keyed by (subject, anchor)."""

    def __init__(self, objects=(), relations=(), config_snapshot=None):
        self.objects: dict[int, SceneObject] = {}
        self.relations: dict[tuple, Relation] = {}
        self.config_snapshot: dict = dict(config_snapshot or {})
        self.scene_center: Optional[tuple] = None
        for obj in objects:
            self._insert(obj)
        self._refresh_center()
        for rel in relations:
            self.add_relation(rel)

    def __len__(self) -> int:
        return len(self.objects)

    def __repr__(self) -> str:
        return f"DsmMap(objects={len(self.objects)}, relations={len(self.relations)})"

    def _insert(self, obj: SceneObject) -> None:
        if obj.id in self.objects:
            raise ValueError(f"duplicate object id {obj.id}")
        self.objects[obj.id] = obj

    def _refresh_center(self) -> None:
        self.scene_center = tuple(recompute_scene_center(self)) if self.objects else None

    def next_id(self) -> int:
        return max(self.objects, default=-1) + 1

    def add_object(self, obj: SceneObject) -> SceneObject:
        self._insert(obj)
        self._refresh_center()
        return obj

    def remove_object(self, obj_id: int) -> None:
        del self.objects[obj_id]
        self.relations = {k: r for k, r in self.relations.items() if obj_id not in k}
        self._refresh_center()

    def touch(self) -> None:
        """Call after mutating object clouds so the scene center follows."""
        self._refresh_center()

    def add_relation(self, rel: Relation) -> Relation:
        for end in rel.key:
            if end not in self.objects:
                raise ValueError(f"relation endpoint {end} is not in the map")
        self.relations[rel.key] = rel
        return rel

    def relations_of(self, subject_id: int) -> list:
        return [r for k, r in sorted(self.relations.items()) if k[0] == subject_id]

    def scene_bbox(self) -> Aabb3:
        boxes = [o.bbox for o in self.objects.values()]
        out = boxes[0]
        for b in boxes[1:]:
            out = out.union(b)
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, DsmMap):
            return NotImplemented
        return (
            self.objects.keys() == other.objects.keys()
            and all(self.objects[k] == other.objects[k] for k in self.objects)
            and self.relations == other.relations
            and self.scene_center == other.scene_center
            and self.config_snapshot == other.config_snapshot
        )


def recompute_scene_center(dsm: DsmMap) -> np.ndarray:
    """Mean of the object bbox centers."""
    if not dsm.objects:
        raise ValueError("scene center of an empty map is undefined")
    centers = np.array([dsm.objects[k].bbox.center for k in sorted(dsm.objects)])
    return centers.mean(axis=0)
