"""Grounding accuracy and point-level segmentation metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from dsmap.geometry import aabb_iou
from dsmap.scene import PointCloud

MATCH_RADIUS = 0.05
UNLABELED = -1


def acc_at(pairs, threshold: float) -> float:
    """Fraction of (predicted box, ground-truth box) pairs with IoU >= ``threshold``."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    pairs = list(pairs)
    if not pairs:
        raise ValueError("accuracy of an empty result list is undefined")
    hits = sum(aabb_iou(p, g) >= threshold for p, g in pairs)
    return hits / len(pairs)


@dataclass
class SegReport:
    per_class_acc: dict
    per_class_iou: dict
    frequency: dict
    mAcc: float
    F_mIoU: float
    matched_fraction: float

    def to_dict(self, scale: float = 100.0) -> dict:
        return {
            "mAcc": self.mAcc * scale,
            "F_mIoU": self.F_mIoU * scale,
            "matched_fraction": self.matched_fraction,
            "per_class_acc": {str(k): v * scale for k, v in sorted(self.per_class_acc.items())},
            "per_class_iou": {str(k): v * scale for k, v in sorted(self.per_class_iou.items())},
        }


def transfer_labels(pred: PointCloud, gt: PointCloud, radius: float = MATCH_RADIUS) -> np.ndarray:
    """Label of the nearest predicted point within ``radius`` of each GT point; UNLABELED otherwise."""
    if len(pred) == 0:
        return np.full(len(gt), UNLABELED, dtype=np.int64)
    tree = cKDTree(np.asarray(pred.points, dtype=np.float64))
    dist, idx = tree.query(np.asarray(gt.points, dtype=np.float64), k=1, distance_upper_bound=radius)
    out = np.full(len(gt), UNLABELED, dtype=np.int64)
    ok = np.isfinite(dist)
    out[ok] = np.asarray(pred.labels)[idx[ok]]
    return out


def confusion_scores(gt_labels, pred_labels) -> SegReport:
    """Per-class accuracy/IoU from per-GT-point label pairs."""
    gt_labels = np.asarray(gt_labels, dtype=np.int64)
    pred_labels = np.asarray(pred_labels, dtype=np.int64)
    fg = gt_labels >= 0
    if not fg.any():
        raise ValueError("ground truth has no labeled points")
    gt_fg, pred_fg = gt_labels[fg], pred_labels[fg]
    classes = sorted(int(c) for c in np.unique(gt_fg))
    acc, iou, freq, counts = {}, {}, {}, {}
    for c in classes:
        is_gt = gt_fg == c
        is_pred = pred_fg == c
        tp = int((is_gt & is_pred).sum())
        acc[c] = tp / int(is_gt.sum())
        iou[c] = tp / int((is_gt | is_pred).sum())
        counts[c] = int(is_gt.sum())
        freq[c] = counts[c] / len(gt_fg)
    m_acc = float(np.mean([acc[c] for c in classes]))
    # weight by raw counts so a perfect labeling sums to exactly 1
    f_miou = float(sum(counts[c] * iou[c] for c in classes) / len(gt_fg))
    matched = float((pred_fg != UNLABELED).mean())
    return SegReport(acc, iou, freq, m_acc, f_miou, matched)


def seg_metrics(pred: PointCloud, gt: PointCloud, radius: float = MATCH_RADIUS) -> SegReport:
    """mAcc and frequency-weighted mean IoU after nearest-neighbor label transfer."""
    if len(gt) == 0:
        raise ValueError("ground-truth cloud is empty")
    if gt.labels is None or (len(pred) and pred.labels is None):
        raise ValueError("both clouds need per-point labels")
    return confusion_scores(gt.labels, transfer_labels(pred, gt, radius))


@dataclass
class GroundReport:
    counts: dict = field(default_factory=dict)
    acc_025: dict = field(default_factory=dict)
    acc_05: dict = field(default_factory=dict)

    def to_dict(self, scale: float = 100.0) -> dict:
        out = {}
        for kind in sorted(self.counts):
            out[kind] = {
                "count": self.counts[kind],
                "acc_at_025": self.acc_025[kind] * scale,
                "acc_at_05": self.acc_05[kind] * scale,
            }
        return out


def ground_report(results) -> GroundReport:
    """Per-kind and overall Acc@0.25/0.5 from (kind, predicted box, GT box) triples."""
    results = list(results)
    if not results:
        raise ValueError("no grounding results to score")
    rep = GroundReport()
    kinds = sorted({k for k, _, _ in results})
    for kind in kinds + ["overall"]:
        pairs = [(p, g) for k, p, g in results if kind == "overall" or k == kind]
        rep.counts[kind] = len(pairs)
        rep.acc_025[kind] = acc_at(pairs, 0.25)
        rep.acc_05[kind] = acc_at(pairs, 0.5)
    return rep
