"""Geometric relation descriptors and incremental relation updates."""
from __future__ import annotations

import logging

import numpy as np

from dsmap.geometry import Aabb3, aabb_contains
from dsmap.scene import DsmMap, Relation

log = logging.getLogger(__name__)

NEAR_DISTANCE = 0.75
VERTICAL_XY_IOU = 0.25
CONTACT_TOL = 0.02


def xy_iou(a: Aabb3, b: Aabb3) -> float:
    lo = np.maximum(a.lo[:2], b.lo[:2])
    hi = np.minimum(a.hi[:2], b.hi[:2])
    inter = float(np.prod(np.clip(hi - lo, 0, None)))
    area_a = float(np.prod(a.extent[:2]))
    area_b = float(np.prod(b.extent[:2]))
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def describe_relation(subject: Aabb3, anchor: Aabb3, scene_center) -> tuple[float, str]:
    """Centroid distance and descriptor of ``subject`` relative to ``anchor``.

    Checked in order: containment, vertical stacking (footprints overlapping
    by more than 0.25 IoU), proximity under 0.75 m, then a left/right/front/
    behind reading for a viewer standing at the scene center facing the anchor.
    """
    distance = float(np.linalg.norm(subject.center - anchor.center))
    if aabb_contains(subject, anchor):
        return distance, "inside"
    if xy_iou(subject, anchor) > VERTICAL_XY_IOU:
        gap = subject.min[2] - anchor.max[2]
        if gap >= -CONTACT_TOL:
            return distance, "on" if gap <= CONTACT_TOL else "above"
        if subject.max[2] <= anchor.min[2] + CONTACT_TOL:
            return distance, "below"
    if distance < NEAR_DISTANCE:
        return distance, "near"
    forward = anchor.center[:2] - np.asarray(scene_center, dtype=np.float64)[:2]
    if np.linalg.norm(forward) < 1e-9:
        forward = np.array([1.0, 0.0])
    forward /= np.linalg.norm(forward)
    right = np.array([forward[1], -forward[0]])
    offset = subject.center[:2] - anchor.center[:2]
    along, lateral = float(offset @ forward), float(offset @ right)
    if abs(along) >= abs(lateral):
        return distance, "behind" if along > 0 else "in-front-of"
    return distance, "right-of" if lateral > 0 else "left-of"


def resolve_anchor(label: str, subject_id: int, dsm: DsmMap):
    """Best fuzzy name match for ``label``, nearest to the subject on ties."""
    from dsmap.grounding.query import fuzzy_match

    subject = dsm.objects[subject_id]
    hits = [(oid, s) for oid, s in fuzzy_match(label, dsm) if oid != subject_id]
    if not hits:
        return None
    top = max(s for _, s in hits)
    best = [oid for oid, s in hits if s == top]
    center = subject.bbox.center
    return min(best, key=lambda oid: (float(np.linalg.norm(dsm.objects[oid].bbox.center - center)), oid))


def _surviving(dsm: DsmMap, obj_id: int, frame_id: int) -> int:
    return sum(f.surviving for f in dsm.objects[obj_id].fragments if f.frame_id == frame_id)


def resolve_relation_text(rel: Relation, dsm: DsmMap) -> str:
    """Pick the observed text whose subject fragment kept the most points; newest wins ties."""
    if not rel.observations:
        return rel.r_s
    best = max(
        enumerate(rel.observations),
        key=lambda item: (_surviving(dsm, rel.subject_id, item[1][0]), item[1][0], item[0]),
    )
    return best[1][1]


def refresh_relations(dsm: DsmMap) -> None:
    """Recompute distances, descriptors and resolved texts from the current geometry."""
    if not dsm.relations:
        return
    center = dsm.scene_center
    for rel in dsm.relations.values():
        dist, desc = describe_relation(dsm.objects[rel.subject_id].bbox, dsm.objects[rel.anchor_id].bbox, center)
        rel.r_g_distance = dist
        rel.r_g_descriptor = desc
        rel.r_s = resolve_relation_text(rel, dsm)


def update_relations(dsm: DsmMap, frame_relations, frame_id: int) -> list:
    """Fold one frame's caption relations into the map.

    ``frame_relations`` holds (subject object id, RelationHint) pairs. Hints
    whose anchor label matches no other object are dropped and returned.
    """
    dropped = []
    for subject_id, hint in frame_relations:
        anchor_id = resolve_anchor(hint.anchor_label, subject_id, dsm)
        if anchor_id is None:
            log.warning("relation anchor %r for object %d matches no map object; dropped",
                        hint.anchor_label, subject_id)
            dropped.append((subject_id, hint))
            continue
        key = (subject_id, anchor_id)
        rel = dsm.relations.get(key)
        if rel is None:
            dist, desc = describe_relation(dsm.objects[subject_id].bbox, dsm.objects[anchor_id].bbox,
                                           dsm.scene_center)
            rel = dsm.add_relation(Relation(subject_id, anchor_id, dist, desc, hint.semantic))
        rel.observations.append((frame_id, hint.semantic))
    refresh_relations(dsm)
    return dropped
