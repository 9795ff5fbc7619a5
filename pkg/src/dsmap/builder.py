"""Incremental map construction from a frame sequence."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from dsmap.errors import BackendError, DsmError, EmptyFragment, FrameError
from dsmap.fusion import AssociationReport, CandidateObservation, associate_frame
from dsmap.ingest.frames import FrameRecord
from dsmap.ingest.unproject import unproject
from dsmap.perception.captions import CaptionResult, caption_object
from dsmap.relations import update_relations
from dsmap.scene import DsmMap, SemanticCaption
from dsmap.window import Sphere, apply_window, bounding_sphere

log = logging.getLogger(__name__)


@dataclass
class BuildReport:
    frames: int = 0
    detections: int = 0
    dropped_detections: int = 0
    merges: int = 0
    new_objects: int = 0
    dropped_points: int = 0
    dropped_relations: int = 0
    caption_fallbacks: int = 0
    seconds: float = 0.0
    associations: list = field(default_factory=list)

    def to_dict(self, n_objects: int) -> dict:
        return {
            "objects": n_objects,
            "frames": self.frames,
            "detections": self.detections,
            "dropped_detections": self.dropped_detections,
            "merges": self.merges,
            "new_objects": self.new_objects,
            "dropped_points": self.dropped_points,
            "dropped_relations": self.dropped_relations,
            "caption_fallbacks": self.caption_fallbacks,
            "seconds": round(self.seconds, 3),
        }


class MapBuilder:
    """Streams frames through segmentation, captioning, fusion and window filtering.

    Parameters
    ----------
    cfg : PipelineConfig
        Fusion, window and seed settings. Serialized into the map.
    backend
        Perception backend (mock or remote).
    """

    def __init__(self, cfg, backend):
        self.cfg = cfg
        self.backend = backend
        self.dsm = DsmMap(config_snapshot=cfg.to_dict())
        self.report = BuildReport()

    def candidates(self, frame: FrameRecord) -> list:
        color = frame.load_color()
        depth = frame.load_depth()
        labels = [d.label for d in frame.detections]
        out = []
        for idx, det in enumerate(frame.detections):
            self.report.detections += 1
            mask = det.segmentation()
            try:
                cloud = unproject(depth, frame.intrinsics, frame.pose, mask, color, self.cfg.max_depth)
            except EmptyFragment:
                log.info("frame %d: detection %d (%s) has no usable depth; dropped", frame.frame_id, idx, det.label)
                self.report.dropped_detections += 1
                continue
            neighbors = labels[:idx] + labels[idx + 1:]
            try:
                caption = caption_object(color, det, neighbors, self.backend)
            except BackendError as exc:
                log.warning("frame %d: captioning %s failed (%s); using its label only", frame.frame_id,
                            det.label, exc)
                self.report.caption_fallbacks += 1
                caption = CaptionResult(SemanticCaption(det.label.strip().lower() or "object", "", "", ""))
            sphere = self.fragment_sphere(cloud, frame, idx)
            out.append(CandidateObservation(
                label=det.label,
                fragment=cloud,
                f_v=self.backend.embed_image_crop(color, mask),
                f_s=self.backend.embed_text(caption.caption.text()),
                caption=caption,
                viewpoint=tuple(frame.viewpoint),
                frame_id=frame.frame_id,
                sphere=sphere,
            ))
        return out

    def fragment_sphere(self, cloud, frame: FrameRecord, idx: int) -> Sphere:
        """Bounding sphere of one fragment, padded for the pixel footprint at its depth.

        Observed silhouettes stop at pixel centers, so the unpadded sphere
        undershoots the true extent by up to one footprint.
        """
        sphere = bounding_sphere(cloud.points, self.cfg.window.mc_samples,
                                 seed=[self.cfg.seed, frame.frame_id, idx])
        depth = float(np.linalg.norm(np.asarray(sphere.center) - frame.viewpoint))
        pad = self.cfg.window.pixel_margin * depth / min(frame.intrinsics.fx, frame.intrinsics.fy)
        return Sphere(sphere.center, sphere.radius + pad)

    def process_frame(self, frame: FrameRecord) -> AssociationReport:
        try:
            return self._process(frame)
        except (DsmError, ValueError, OSError) as exc:
            raise FrameError(frame.frame_id, exc) from exc

    def _process(self, frame: FrameRecord) -> AssociationReport:
        dsm = self.dsm
        cands = self.candidates(frame)
        assoc = associate_frame(dsm, cands, self.cfg.fusion, frame.frame_id)
        self.report.frames += 1
        self.report.merges += len(assoc.matches)
        self.report.new_objects += len(assoc.new_objects)
        self.report.associations.append(assoc.to_dict())
        assignment = assoc.assignment()
        for oid in sorted(set(assignment.values())):
            upd = apply_window(dsm.objects[oid], self.cfg.window)
            self.report.dropped_points += upd.dropped
        dsm.touch()
        hints = [(assignment[ci], hint) for ci, cand in enumerate(cands) for hint in cand.caption.relations]
        self.report.dropped_relations += len(update_relations(dsm, hints, frame.frame_id))
        for obj in dsm.objects.values():
            if not obj.finalized and obj.last_frame_id is not None \
                    and obj.last_frame_id <= frame.frame_id - self.cfg.window.window_len:
                obj.finalized = True
        return assoc

    def build(self, frames) -> DsmMap:
        start = time.perf_counter()
        for frame in frames:
            self.process_frame(frame)
        self.report.seconds = time.perf_counter() - start
        if self.report.frames == 0:
            raise DsmError("the sequence contains no frames")
        return self.dsm


def build_map(frames, cfg, backend) -> tuple[DsmMap, BuildReport]:
    builder = MapBuilder(cfg, backend)
    dsm = builder.build(frames)
    return dsm, builder.report
