"""Map object captions onto a closed class list."""
from __future__ import annotations

import logging

import numpy as np

from dsmap.perception.backends import extract_json
from dsmap.scene import DsmMap, PointCloud
from dsmap.text import content_tokens

log = logging.getLogger(__name__)


def mock_label(sentence: str, classes) -> str:
    """Class sharing most content tokens with ``sentence``; ties go to the larger share, then alphabetical."""
    words = content_tokens(sentence)

    def key(cls):
        ct = content_tokens(cls) or {cls.lower()}
        hits = len(ct & words)
        return (-hits, -hits / len(ct), cls)

    return min(classes, key=key)


def map_labels(captions, classes, backend) -> list:
    """(class, fell_back) per caption, chosen from ``classes``."""
    classes = list(classes)
    if not classes:
        raise ValueError("class list is empty")
    out = []
    for cap in captions:
        sentence = cap.label_sentence()
        choice, fell_back = None, False
        if backend.remote:
            listing = "\n".join(classes)
            for _ in range(2):
                try:
                    got = str(extract_json(backend.ask("map_label", sentence=sentence, classes=listing))["category"])
                except (ValueError, KeyError, TypeError) as exc:
                    log.warning("label reply unusable: %s", exc)
                    continue
                if got in classes:
                    choice = got
                    break
                log.warning("label reply %r is not in the class list", got)
            if choice is None:
                fell_back = True
        if choice is None:
            choice = mock_label(sentence, classes)
        out.append((choice, fell_back))
    return out


def labeled_cloud(dsm: DsmMap, classes, backend) -> PointCloud:
    """All object points of ``dsm`` labeled with the class index of their object."""
    ids = sorted(dsm.objects)
    if not ids:
        return PointCloud(np.zeros((0, 3)), labels=np.zeros(0, dtype=np.int32))
    chosen = map_labels([dsm.objects[i].caption for i in ids], classes, backend)
    pts, labels = [], []
    for oid, (cls, _) in zip(ids, chosen):
        obj = dsm.objects[oid]
        pts.append(obj.cloud.points)
        labels.append(np.full(len(obj.cloud), list(classes).index(cls), dtype=np.int32))
    return PointCloud(np.concatenate(pts), labels=np.concatenate(labels))


def gt_cloud(gt: DsmMap) -> PointCloud:
    """Concatenated ground-truth points with their stored labels."""
    ids = sorted(gt.objects)
    clouds = [gt.objects[i].cloud for i in ids]
    return PointCloud(np.concatenate([c.points for c in clouds]),
                      labels=np.concatenate([c.labels for c in clouds]))
