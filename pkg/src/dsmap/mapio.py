"""Map persistence: one self-describing JSON document per map.

Point arrays are stored inline as base64 little-endian binary. Clouds with at
least ``SIDECAR_THRESHOLD`` points go to a raw float32 sidecar next to the
map file, referenced by file name.
"""
from __future__ import annotations

import base64
import json
import math
from pathlib import Path

import numpy as np

from dsmap.errors import MapFormatError, MapVersionError
from dsmap.scene import DsmMap, Fragment, PointCloud, Relation, SceneObject, SemanticCaption

FORMAT_NAME = "dsm-map"
FORMAT_VERSION = 1
SIDECAR_THRESHOLD = 100_000


def _pack(arr: np.ndarray, dtype: str) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype=np.dtype(dtype)).tobytes()).decode("ascii")


def _unpack(data: str, dtype: str, shape) -> np.ndarray:
    raw = base64.b64decode(data.encode("ascii"), validate=True)
    arr = np.frombuffer(raw, dtype=np.dtype(dtype))
    # frombuffer yields a read-only view; callers mutate clouds later
    return arr.astype(np.dtype(dtype).newbyteorder("="), copy=True).reshape(shape)


def _encode_cloud(cloud: PointCloud, sidecar: Path | None) -> dict:
    n = len(cloud)
    rec = {"count": n}
    if sidecar is not None:
        sidecar.write_bytes(np.ascontiguousarray(cloud.points, dtype="<f4").tobytes())
        rec["points"] = {"sidecar": sidecar.name}
    else:
        rec["points"] = {"b64": _pack(cloud.points, "<f4")}
    rec["colors"] = None if cloud.colors is None else _pack(cloud.colors, "u1")
    rec["labels"] = None if cloud.labels is None else _pack(cloud.labels, "<i4")
    return rec


def _decode_cloud(rec: dict, base_dir: Path) -> PointCloud:
    n = int(rec["count"])
    src = rec["points"]
    if "sidecar" in src:
        side = base_dir / src["sidecar"]
        if not side.is_file():
            raise MapFormatError(f"missing point sidecar {side}")
        raw = side.read_bytes()
        if len(raw) != n * 12:
            raise MapFormatError(f"sidecar {side} holds {len(raw)} bytes, expected {n * 12}")
        points = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(n, 3)
    else:
        points = _unpack(src["b64"], "<f4", (n, 3))
    colors = None if rec.get("colors") is None else _unpack(rec["colors"], "u1", (n, 3))
    labels = None if rec.get("labels") is None else _unpack(rec["labels"], "<i4", (n,))
    return PointCloud(points, colors, labels)


def _float_list(values) -> list:
    out = [float(v) for v in values]
    if not all(math.isfinite(v) for v in out):
        raise ValueError("non-finite coordinate")
    return out


def _encode_object(obj: SceneObject, sidecar: Path | None) -> dict:
    bbox = obj.bbox
    return {
        "id": obj.id,
        "caption": obj.caption.to_dict(),
        "bbox": bbox.to_dict(),
        "cloud": _encode_cloud(obj.cloud, sidecar),
        "f_v": {"dim": len(obj.f_v), "b64": _pack(obj.f_v, "<f8")},
        "f_s": {"dim": len(obj.f_s), "b64": _pack(obj.f_s, "<f8")},
        "tentative": obj.tentative,
        "finalized": obj.finalized,
        "fragments": [
            {
                "frame_id": f.frame_id,
                "viewpoint": _float_list(f.viewpoint),
                "indices": {"count": len(f.indices), "b64": _pack(f.indices, "<i8")},
                "caption": f.caption.to_dict(),
                "sphere_center": _float_list(f.sphere_center),
                "sphere_radius": f.sphere_radius,
                "observed": f.observed,
            }
            for f in obj.fragments
        ],
    }


def _decode_object(rec: dict, base_dir: Path) -> SceneObject:
    fragments = [
        Fragment(
            frame_id=int(f["frame_id"]),
            viewpoint=tuple(f["viewpoint"]),
            indices=_unpack(f["indices"]["b64"], "<i8", (int(f["indices"]["count"]),)),
            caption=SemanticCaption.from_dict(f["caption"]),
            sphere_center=tuple(f["sphere_center"]),
            sphere_radius=float(f["sphere_radius"]),
            observed=int(f["observed"]),
        )
        for f in rec["fragments"]
    ]
    return SceneObject(
        id=int(rec["id"]),
        caption=SemanticCaption.from_dict(rec["caption"]),
        cloud=_decode_cloud(rec["cloud"], base_dir),
        f_v=_unpack(rec["f_v"]["b64"], "<f8", (int(rec["f_v"]["dim"]),)),
        f_s=_unpack(rec["f_s"]["b64"], "<f8", (int(rec["f_s"]["dim"]),)),
        fragments=fragments,
        tentative=bool(rec.get("tentative", False)),
        finalized=bool(rec.get("finalized", False)),
    )


def map_to_document(dsm: DsmMap, path: Path | None = None) -> dict:
    objects = []
    for key in sorted(dsm.objects):
        obj = dsm.objects[key]
        sidecar = None
        if path is not None and len(obj.cloud) >= SIDECAR_THRESHOLD:
            sidecar = path.with_name(f"{path.name}.obj{obj.id}.f32")
        objects.append(_encode_object(obj, sidecar))
    relations = [
        {
            "subject_id": r.subject_id,
            "anchor_id": r.anchor_id,
            "r_g_distance": r.r_g_distance,
            "r_g_descriptor": r.r_g_descriptor,
            "r_s": r.r_s,
            "observations": [[f, t] for f, t in r.observations],
        }
        for _, r in sorted(dsm.relations.items())
    ]
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config_snapshot": dsm.config_snapshot,
        "scene_center": None if dsm.scene_center is None else _float_list(dsm.scene_center),
        "objects": objects,
        "relations": relations,
    }


def dumps_map(dsm: DsmMap) -> str:
    """Serialize a map with every cloud inline (no sidecars)."""
    return json.dumps(map_to_document(dsm), sort_keys=True, indent=1) + "\n"


def save_map(dsm: DsmMap, path) -> None:
    path = Path(path)
    doc = map_to_document(dsm, path)
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def document_to_map(doc, base_dir: Path) -> DsmMap:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise MapFormatError(f"not a {FORMAT_NAME} document")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise MapVersionError(f"map format version {version!r} is not supported (expected {FORMAT_VERSION})")
    objects = []
    for i, rec in enumerate(doc.get("objects", [])):
        try:
            objects.append(_decode_object(rec, base_dir))
        except MapFormatError:
            raise
        except Exception as exc:
            ident = rec.get("id", "?") if isinstance(rec, dict) else "?"
            raise MapFormatError(f"object record #{i} (id={ident}): {exc!r}") from exc
    dsm = DsmMap(objects, config_snapshot=doc.get("config_snapshot") or {})
    for i, rec in enumerate(doc.get("relations", [])):
        try:
            dsm.add_relation(
                Relation(
                    subject_id=int(rec["subject_id"]),
                    anchor_id=int(rec["anchor_id"]),
                    r_g_distance=float(rec["r_g_distance"]),
                    r_g_descriptor=rec["r_g_descriptor"],
                    r_s=rec["r_s"],
                    observations=[tuple(o) for o in rec.get("observations", [])],
                )
            )
        except Exception as exc:
            raise MapFormatError(f"relation record #{i}: {exc!r}") from exc
    stored = doc.get("scene_center")
    if stored is not None and dsm.scene_center is not None:
        if not np.allclose(stored, dsm.scene_center, atol=1e-9):
            raise MapFormatError("stored scene_center disagrees with the object boxes")
    return dsm


def loads_map(text: str, base_dir=".") -> DsmMap:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MapFormatError(f"map is not valid JSON (truncated?): {exc}") from exc
    return document_to_map(doc, Path(base_dir))


def load_map(path) -> DsmMap:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MapFormatError(f"cannot read map {path}: {exc}") from exc
    return loads_map(text, path.parent)
