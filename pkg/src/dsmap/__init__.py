"""Diverse semantic maps (DSM) from RGB-D sequences, and 3D visual grounding over them."""

from dsmap.geometry import Aabb3, aabb_contains, aabb_iou
from dsmap.scene import (
    DsmMap,
    Fragment,
    PointCloud,
    Relation,
    SceneObject,
    SemanticCaption,
    recompute_scene_center,
)
from dsmap.mapio import load_map, save_map

__version__ = "0.1.0"

__all__ = [
    "Aabb3",
    "DsmMap",
    "Fragment",
    "PointCloud",
    "Relation",
    "SceneObject",
    "SemanticCaption",
    "aabb_contains",
    "aabb_iou",
    "load_map",
    "recompute_scene_center",
    "save_map",
]
