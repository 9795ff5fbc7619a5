"""Multimodal object fusion: score detections against map objects and merge matches."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from dsmap.geometry import Aabb3, aabb_contains, aabb_iou
from dsmap.perception.captions import CaptionResult
from dsmap.perception.encoders import cosine
from dsmap.scene import DsmMap, Fragment, PointCloud, SceneObject, unit
from dsmap.window import Sphere

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FusionConfig:
    t_v: float = 0.4
    t_x: float = 0.8
    t_g: float = 0.3
    total_threshold: float = 1.5
    s_g0: float = 1.0

    def __post_init__(self):
        for name in ("t_v", "t_x", "t_g", "total_threshold"):
            if not 0.0 <= getattr(self, name) <= 3.0:
                raise ValueError(f"{name} must lie in [0, 3]")
        if not 0.0 <= self.s_g0 <= 1.0:
            raise ValueError("s_g0 must lie in [0, 1]")


@dataclass
class CandidateObservation:
    label: str
    fragment: PointCloud
    f_v: np.ndarray
    f_s: np.ndarray
    caption: CaptionResult
    viewpoint: tuple
    frame_id: int
    sphere: Sphere
    bbox: Optional[Aabb3] = None

    def __post_init__(self):
        if len(self.fragment) == 0:
            raise ValueError("candidate fragment is empty")
        if self.bbox is None:
            self.bbox = self.fragment.bbox()
        self.f_v = unit(self.f_v)
        self.f_s = unit(self.f_s)


@dataclass(frozen=True)
class MatchScore:
    s_v: float
    s_g: float
    s_c: float
    score: float
    gated: bool
    match: bool


def visual_similarity(f_v_p, f_v_q) -> float:
    return cosine(f_v_p, f_v_q)


def semantic_similarity(f_s_p, f_s_q) -> float:
    return cosine(f_s_p, f_s_q)


def geometric_similarity(bbox_p: Aabb3, bbox_q: Aabb3, s_g0: float = 1.0) -> float:
    """``s_g0`` when either box contains the other, else their IoU."""
    if aabb_contains(bbox_p, bbox_q) or aabb_contains(bbox_q, bbox_p):
        return s_g0
    return aabb_iou(bbox_p, bbox_q)


def decide(s_v: float, s_g: float, s_c: float, cfg: FusionConfig) -> MatchScore:
    """Fuse the three similarities; any score strictly below its gate vetoes the match."""
    score = s_v + s_g + s_c
    gated = not (s_v < cfg.t_v or s_c < cfg.t_x or s_g < cfg.t_g)
    return MatchScore(s_v, s_g, s_c, score, gated, gated and score > cfg.total_threshold)


def match_score(obj: SceneObject, cand: CandidateObservation, cfg: FusionConfig) -> MatchScore:
    return decide(
        visual_similarity(obj.f_v, cand.f_v),
        geometric_similarity(obj.bbox, cand.bbox, cfg.s_g0),
        semantic_similarity(obj.f_s, cand.f_s),
        cfg,
    )


@dataclass
class AssociationReport:
    frame_id: int
    matches: list = field(default_factory=list)      # (candidate index, object id, score)
    new_objects: list = field(default_factory=list)  # (candidate index, object id)

    def assignment(self) -> dict:
        """Candidate index -> object id it ended up in."""
        out = {c: o for c, o, _ in self.matches}
        out.update(dict(self.new_objects))
        return out

    def to_dict(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "matches": [{"candidate": c, "object": o, "score": round(s, 6)} for c, o, s in self.matches],
            "new_objects": [{"candidate": c, "object": o} for c, o in self.new_objects],
        }


def _fragment_for(cand: CandidateObservation, start: int) -> Fragment:
    return Fragment(
        frame_id=cand.frame_id,
        viewpoint=cand.viewpoint,
        indices=np.arange(start, start + len(cand.fragment)),
        caption=cand.caption.caption,
        sphere_center=cand.sphere.center,
        sphere_radius=cand.sphere.radius,
        observed=len(cand.fragment),
    )


def merge_candidate(obj: SceneObject, cand: CandidateObservation) -> None:
    """Append the candidate's points as a new fragment and update running features."""
    n_prev = len(obj.fragments) or 1
    start = len(obj.cloud)
    obj.cloud = PointCloud.concat([obj.cloud, cand.fragment.astype(np.float32)])
    obj.fragments.append(_fragment_for(cand, start))
    obj.f_v = unit(n_prev * obj.f_v + cand.f_v)
    obj.f_s = unit(n_prev * obj.f_s + cand.f_s)
    obj.finalized = False


def new_object(obj_id: int, cand: CandidateObservation) -> SceneObject:
    return SceneObject(
        id=obj_id,
        caption=cand.caption.caption,
        cloud=cand.fragment.astype(np.float32),
        f_v=cand.f_v,
        f_s=cand.f_s,
        fragments=[_fragment_for(cand, 0)],
    )


def associate_frame(dsm: DsmMap, candidates, cfg: FusionConfig, frame_id: int = -1) -> AssociationReport:
    """Greedy one-to-one association of one frame's candidates with existing objects.

    All (object, candidate) pairs that pass the gates and exceed the total
    threshold are accepted in order of descending score; leftovers become new
    objects. Ids are assigned in candidate order.
    """
    report = AssociationReport(frame_id)
    pairs = []
    for obj_id in sorted(dsm.objects):
        obj = dsm.objects[obj_id]
        for ci, cand in enumerate(candidates):
            ms = match_score(obj, cand, cfg)
            if ms.match:
                pairs.append((-ms.score, obj_id, ci))
    pairs.sort()
    used_obj, used_cand = set(), set()
    for neg_score, obj_id, ci in pairs:
        if obj_id in used_obj or ci in used_cand:
            continue
        used_obj.add(obj_id)
        used_cand.add(ci)
        merge_candidate(dsm.objects[obj_id], candidates[ci])
        report.matches.append((ci, obj_id, -neg_score))
    report.matches.sort()
    for ci, cand in enumerate(candidates):
        if ci in used_cand:
            continue
        obj = new_object(dsm.next_id(), cand)
        dsm.add_object(obj)
        report.new_objects.append((ci, obj.id))
    dsm.touch()
    return report
