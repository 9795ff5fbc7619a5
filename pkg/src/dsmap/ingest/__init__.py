from dsmap.ingest.frames import (
    CameraIntrinsics,
    Detection2d,
    FrameRecord,
    load_color,
    load_depth,
    read_sequence,
    save_color,
    save_depth,
    validate_pose,
    write_sequence,
)
from dsmap.ingest.masks import Mask2d, intersect_masks
from dsmap.ingest.unproject import project, unproject

__all__ = [
    "CameraIntrinsics",
    "Detection2d",
    "FrameRecord",
    "Mask2d",
    "intersect_masks",
    "load_color",
    "load_depth",
    "project",
    "read_sequence",
    "save_color",
    "save_depth",
    "unproject",
    "validate_pose",
    "write_sequence",
]
