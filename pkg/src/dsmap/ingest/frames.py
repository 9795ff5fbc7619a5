"""Frame records, camera models, and the JSON Lines sequence manifest."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
from PIL import Image

from dsmap.errors import MaskError, SequenceError
from dsmap.ingest.masks import Mask2d

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def from_fov(cls, width: int, height: int, vfov_deg: float) -> "CameraIntrinsics":
        f = (height / 2.0) / np.tan(np.radians(vfov_deg) / 2.0)
        return cls(f, f, width / 2.0, height / 2.0, width, height)

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]))


def validate_pose(pose, tol: float = 1e-4) -> np.ndarray:
    """Return ``pose`` as a float64 4x4 array after checking it is rigid."""
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape != (4, 4):
        raise ValueError(f"pose must be 4x4, got {pose.shape}")
    if not np.all(np.isfinite(pose)):
        raise ValueError("pose has non-finite entries")
    if not np.allclose(pose[3], [0, 0, 0, 1]):
        raise ValueError("pose bottom row must be (0, 0, 0, 1)")
    rot = pose[:3, :3]
    if not np.allclose(rot.T @ rot, np.eye(3), atol=tol):
        raise ValueError("pose rotation block is not orthonormal")
    return pose


@dataclass
class Detection2d:
    label: str
    bbox2d: tuple
    seg_c: Mask2d
    seg_d: Optional[Mask2d] = None
    confidence: float = 1.0
    # Precomputed caption reply attached by the producer (synthetic scenes).
    caption_hint: Optional[dict] = None

    def __post_init__(self):
        if self.seg_c.is_empty():
            raise MaskError(f"detection {self.label!r} has an empty color mask")
        x, y, w, h = self.bbox2d
        if x < 0 or y < 0 or w <= 0 or h <= 0 or x + w > self.seg_c.width or y + h > self.seg_c.height:
            raise ValueError(f"detection {self.label!r} bbox {self.bbox2d} outside the image")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")

    def segmentation(self) -> Mask2d:
        """seg_c intersected with seg_d; seg_c alone when no depth mask is given."""
        if self.seg_d is None:
            return self.seg_c
        return self.seg_c.intersect(self.seg_d)

    def to_dict(self) -> dict:
        out = {
            "label": self.label,
            "bbox": list(self.bbox2d),
            "confidence": self.confidence,
            "seg_c": {"runs": self.seg_c.runs.tolist()},
        }
        if self.seg_d is not None:
            out["seg_d"] = {"runs": self.seg_d.runs.tolist()}
        if self.caption_hint is not None:
            out["caption"] = self.caption_hint
        return out

    @classmethod
    def from_dict(cls, d: dict, width: int, height: int) -> "Detection2d":
        seg_d = d.get("seg_d")
        return cls(
            label=str(d["label"]),
            bbox2d=tuple(int(v) for v in d["bbox"]),
            seg_c=Mask2d.from_dict(d["seg_c"], width, height),
            seg_d=None if seg_d is None else Mask2d.from_dict(seg_d, width, height),
            confidence=float(d.get("confidence", 1.0)),
            caption_hint=d.get("caption"),
        )


@dataclass
class FrameRecord:
    frame_id: int
    timestamp: float
    intrinsics: CameraIntrinsics
    pose: np.ndarray
    color_ref: Path
    depth_ref: Path
    detections: list = field(default_factory=list)

    def __post_init__(self):
        self.pose = validate_pose(self.pose)

    @property
    def viewpoint(self) -> np.ndarray:
        return self.pose[:3, 3].copy()

    def load_color(self) -> np.ndarray:
        return load_color(self.color_ref)

    def load_depth(self) -> np.ndarray:
        return load_depth(self.depth_ref)

    def to_dict(self, relative_to: Path | None = None) -> dict:
        def ref(p: Path) -> str:
            if relative_to is not None:
                p = Path(p).relative_to(relative_to)
            return Path(p).as_posix()

        return {
            "frame_id": self.frame_id,
            "timestamp": self.timestamp,
            "intrinsics": self.intrinsics.to_dict(),
            "pose": self.pose.tolist(),
            "color": ref(self.color_ref),
            "depth": ref(self.depth_ref),
            "detections": [d.to_dict() for d in self.detections],
        }


def load_color(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("RGB"), dtype=np.uint8)


def load_depth(path) -> np.ndarray:
    """16-bit millimetre depth image as a uint16 array."""
    with Image.open(path) as im:
        arr = np.array(im)
    if arr.ndim != 2:
        raise SequenceError(f"depth image {path} is not single-channel")
    return arr.astype(np.uint16)


def save_color(path, rgb: np.ndarray) -> None:
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(path, format="PNG")


def save_depth(path, depth_mm: np.ndarray) -> None:
    Image.fromarray(np.asarray(depth_mm, dtype=np.uint16)).save(path, format="PNG")


def parse_frame(line: str, base_dir: Path) -> FrameRecord:
    d = json.loads(line)
    intr = CameraIntrinsics.from_dict(d["intrinsics"])
    color_ref = base_dir / d["color"]
    depth_ref = base_dir / d["depth"]
    for ref in (color_ref, depth_ref):
        if not ref.is_file():
            raise SequenceError(f"missing image file {ref}")
    dets = [Detection2d.from_dict(x, intr.width, intr.height) for x in d.get("detections", [])]
    return FrameRecord(
        frame_id=int(d["frame_id"]),
        timestamp=float(d.get("timestamp", 0.0)),
        intrinsics=intr,
        pose=np.asarray(d["pose"], dtype=np.float64),
        color_ref=color_ref,
        depth_ref=depth_ref,
        detections=dets,
    )


def read_sequence(path) -> Iterator[FrameRecord]:
    """Yield frame records from a JSON Lines manifest in frame_id order.

    Images are resolved relative to the manifest and loaded only on demand.
    Errors name the offending line number.
    """
    path = Path(path)
    base_dir = path.parent
    last_id = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = parse_frame(line, base_dir)
            except SequenceError as exc:
                raise SequenceError(f"{path}:{lineno}: {exc}") from exc
            except Exception as exc:
                raise SequenceError(f"{path}:{lineno}: malformed frame record: {exc}") from exc
            if last_id is not None and rec.frame_id <= last_id:
                raise SequenceError(
                    f"{path}:{lineno}: frame_id {rec.frame_id} does not increase (previous {last_id})"
                )
            last_id = rec.frame_id
            yield rec


def write_sequence(path, frames) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for fr in frames:
            fh.write(json.dumps(fr.to_dict(relative_to=path.parent), sort_keys=True) + "\n")
