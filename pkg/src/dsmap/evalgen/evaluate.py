"""Score a built map against a ground-truth map."""
from __future__ import annotations

import logging

from dsmap.errors import QueryError
from dsmap.evalgen.labels import gt_cloud, labeled_cloud
from dsmap.evalgen.metrics import SegReport, ground_report, seg_metrics
from dsmap.geometry import Aabb3
from dsmap.grounding.pipeline import GroundingConfig, ground
from dsmap.scene import DsmMap

log = logging.getLogger(__name__)


def evaluate_grounding(built: DsmMap, gt: DsmMap, queries, backend, cfg: GroundingConfig = GroundingConfig()):
    """(GroundReport, per-query records) for ``queries`` grounded in ``built`` and scored against ``gt`` boxes.

    A query that fails to ground (no candidate) counts as a miss.
    """
    results, records = [], []
    for q in queries:
        gt_box = gt.objects[q.gt_object_id].bbox
        try:
            res = ground(built, q.text, backend, cfg)
            pred_box, pred_id = res.bbox, res.predicted_object_id
        except QueryError as exc:
            log.info("query %r failed to ground: %s", q.text, exc)
            pred_box, pred_id = None, None
        if pred_box is None:
            # a degenerate box far away scores IoU 0
            pred_box = Aabb3((1e9, 1e9, 1e9), (1e9, 1e9, 1e9))
        results.append((q.kind, pred_box, gt_box))
        records.append({"query": q.text, "kind": q.kind, "gt_object_id": q.gt_object_id,
                        "predicted_object_id": pred_id})
    return ground_report(results), records


def evaluate_segmentation(pred: DsmMap, gt: DsmMap, backend, classes=None) -> SegReport:
    classes = list(classes or gt.config_snapshot.get("classes") or sorted({o.name for o in gt.objects.values()}))
    return seg_metrics(labeled_cloud(pred, classes, backend), gt_cloud(gt))
