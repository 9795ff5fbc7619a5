"""Masked depth to world-frame point cloud."""
from __future__ import annotations

import numpy as np

from dsmap.errors import EmptyFragment
from dsmap.geometry import invert_pose, transform_points
from dsmap.ingest.frames import CameraIntrinsics
from dsmap.ingest.masks import Mask2d
from dsmap.scene import PointCloud


def unproject(depth_mm, intrinsics: CameraIntrinsics, pose, mask: Mask2d,
              color=None, max_depth: float = 10.0) -> PointCloud:
    """Lift every masked pixel with valid depth into world coordinates.

    Pixels with zero depth or depth beyond ``max_depth`` metres are skipped.
    Raises EmptyFragment when nothing survives.
    """
    depth_mm = np.asarray(depth_mm)
    if depth_mm.shape != (intrinsics.height, intrinsics.width):
        raise ValueError(f"depth shape {depth_mm.shape} does not match intrinsics")
    if (mask.width, mask.height) != (intrinsics.width, intrinsics.height):
        raise ValueError("mask size does not match intrinsics")
    u, v = mask.pixel_coords()
    d = depth_mm[v, u].astype(np.float64)
    ok = (d > 0) & (d <= max_depth * 1000.0)
    if not ok.any():
        raise EmptyFragment("no masked pixel has usable depth")
    u, v, d = u[ok], v[ok], d[ok]
    cam = np.stack(
        [(u - intrinsics.cx) * d / intrinsics.fx, (v - intrinsics.cy) * d / intrinsics.fy, d],
        axis=1,
    ) / 1000.0
    world = transform_points(pose, cam)
    colors = None if color is None else np.asarray(color)[v, u]
    return PointCloud(world, colors)


def project(points, intrinsics: CameraIntrinsics, pose) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """World points to (u, v) pixel coordinates and camera-frame depth in metres."""
    cam = transform_points(invert_pose(pose), points)
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intrinsics.fx * cam[:, 0] / z + intrinsics.cx
        v = intrinsics.fy * cam[:, 1] / z + intrinsics.cy
    return u, v, z
