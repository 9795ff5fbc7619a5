"""End-to-end grounding: query -> candidates -> relations -> renders -> prediction."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from dsmap.errors import QueryError
from dsmap.geometry import Aabb3
from dsmap.grounding.query import (
    FUZZY_THRESHOLD,
    GroundingQuery,
    TopK,
    caption_text,
    extract_candidates,
    filter_topk,
    parse_query,
    relation_sentences,
)
from dsmap.grounding.render import LEVELS, RenderSpec, RenderedView, place_camera, render_level
from dsmap.perception.backends import extract_json
from dsmap.perception.chat import png_base64
from dsmap.scene import DsmMap
from dsmap.text import content_tokens

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroundingConfig:
    k: int = 3
    fov_deg: float = 60.0
    image_size: int = 768
    fuzzy_threshold: float = FUZZY_THRESHOLD
    use_relation_filter: bool = True
    use_attributes: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError("fov_deg must lie in (0, 180)")
        if self.image_size < 16:
            raise ValueError("image_size must be >= 16")


@dataclass
class GroundingResult:
    predicted_object_id: int
    bbox: Aabb3
    query: GroundingQuery
    targets: list
    anchors: list
    sentences: list
    topk_ids: list
    views: list = field(default_factory=list)
    reply: str = ""
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "predicted_object_id": self.predicted_object_id,
            "bbox": self.bbox.to_dict(),
            "evidence": {
                "query": self.query.to_dict(),
                "target_candidates": list(self.targets),
                "anchor_candidates": list(self.anchors),
                "relations": [s.to_dict() for s in self.sentences],
                "topk_object_ids": list(self.topk_ids),
                "views": [v.spec.to_dict() | {"warnings": list(v.warnings)} for v in self.views],
                "vlm_reply": self.reply,
                "flags": list(self.flags),
            },
        }


def _focus(topk: TopK, candidates) -> int:
    """Object the cameras are aimed at: top relation's anchor, else the lowest-id candidate."""
    if topk.sentences:
        return topk.sentences[0].anchor_id
    return min(candidates)


def render_views(dsm: DsmMap, topk_ids, focus_id: int, cfg: GroundingConfig) -> list:
    """Object, place and scene level renders around ``focus_id``."""
    focus = dsm.objects[focus_id].bbox
    anchor = focus.center
    center = dsm.scene_center if dsm.scene_center is not None else anchor
    diag = max(focus.diagonal, 1e-3)
    views = []
    for level in LEVELS:
        pose = place_camera(anchor, center, level, dsm, focus_diag=diag, cluster_ids=list(topk_ids) + [focus_id],
                            fov_deg=cfg.fov_deg)
        fov = cfg.fov_deg
        if level == "object":
            # tighten the frustum onto the focus object's bounding sphere so it fills the frame
            dist = float(np.linalg.norm(pose[:3, 3] - anchor))
            fov = min(cfg.fov_deg, math.degrees(2.0 * math.asin(min(1.0, (diag / 2.0) / dist))))
        spec = RenderSpec(pose, level, fov, cfg.image_size, cfg.image_size, tuple(topk_ids))
        views.append(render_level(dsm, topk_ids, spec))
    return views


def _candidate_text(dsm: DsmMap, oid: int, topk: TopK, use_attributes: bool) -> str:
    parts = [caption_text(dsm.objects[oid], use_attributes)]
    parts += [s.text for s in topk.sentences if s.subject_id == oid]
    return ". ".join(parts)


def mock_choice(dsm: DsmMap, q: str, pool, topk: TopK, use_attributes: bool = True) -> int:
    """Candidate whose caption plus relation evidence shares most content tokens with ``q``; lowest id on ties."""
    qt = content_tokens(q)
    return min(pool, key=lambda oid: (-len(content_tokens(_candidate_text(dsm, oid, topk, use_attributes)) & qt), oid))


def _ask_vlm(dsm, q, pool, topk, views, backend, use_attributes):
    captions = "\n".join(f"{oid}: {caption_text(dsm.objects[oid], use_attributes)}" for oid in pool)
    relations = "\n".join(s.text for s in topk.sentences) or "(none)"
    images = [png_base64(v.image) for v in views]
    reply = ""
    for _ in range(2):
        reply = backend.ask("ground", images=images, captions=captions, relations=relations, query=q)
        try:
            oid = int(extract_json(reply)["object_id"])
        except (ValueError, KeyError, TypeError) as exc:
            log.warning("grounding reply unusable: %s", exc)
            continue
        if oid in pool:
            return oid, reply
        log.warning("grounding reply names non-candidate id %d", oid)
    return None, reply


def ground(dsm: DsmMap, q: str, backend, cfg: GroundingConfig = GroundingConfig()) -> GroundingResult:
    """Predict the map object a free-form query refers to.

    Raises
    ------
    QueryError
        The query is empty or has no target.
    NoCandidateError
        Nothing in the map matches the target phrase.
    """
    if not dsm.objects:
        raise QueryError("cannot ground a query in an empty map")
    query = parse_query(q, backend)
    targets, anchors = extract_candidates(query, dsm, cfg.use_attributes, cfg.fuzzy_threshold)
    flags = []
    if cfg.use_relation_filter:
        sentences = relation_sentences(targets, anchors, dsm)
        topk = filter_topk(sentences, q, cfg.k, backend, targets)
        if topk.fallback:
            flags.append("relation_ranking_fallback")
    else:
        sentences = []
        topk = TopK([], list(targets))
    pool = sorted(set(topk.object_ids) & set(targets)) or sorted(topk.object_ids)
    focus_id = _focus(topk, pool)
    log.debug("rendering around object %d", focus_id)
    views = render_views(dsm, topk.object_ids, focus_id, cfg)
    reply = ""
    pred = None
    if backend.remote:
        pred, reply = _ask_vlm(dsm, q, pool, topk, views, backend, cfg.use_attributes)
        if pred is None:
            flags.append("vlm_choice_fallback")
    if pred is None:
        pred = mock_choice(dsm, q, pool, topk, cfg.use_attributes)
        if not backend.remote:
            reply = f'{{"object_id": {pred}}}'
    return GroundingResult(pred, dsm.objects[pred].bbox, query, targets, anchors, topk.sentences,
                           list(topk.object_ids), views, reply, flags)
