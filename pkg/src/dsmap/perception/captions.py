"""Three-attribute object captions and per-neighbor relation hints."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw

from dsmap.errors import CaptionParseError
from dsmap.perception.backends import extract_json
from dsmap.perception.chat import png_base64
from dsmap.scene import SemanticCaption

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RelationHint:
    anchor_label: str
    spatial: str
    semantic: str


@dataclass
class CaptionResult:
    caption: SemanticCaption
    relations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = self.caption.to_dict()
        out["relations"] = [
            {"anchor": r.anchor_label, "spatial": r.spatial, "semantic": r.semantic}
            for r in self.relations
        ]
        return out


def caption_from_dict(d) -> CaptionResult:
    if not isinstance(d, dict):
        raise CaptionParseError("caption reply is not a JSON object")
    name = str(d.get("name") or "").strip()
    if not name:
        raise CaptionParseError("caption reply has no name")
    fields = {}
    for key in ("appearance", "physical", "affordance"):
        value = d.get(key, "")
        if not isinstance(value, str):
            raise CaptionParseError(f"caption field {key!r} is not a string")
        fields[key] = value.strip()
    relations = []
    for rel in d.get("relations") or []:
        if not isinstance(rel, dict) or not rel.get("anchor"):
            raise CaptionParseError(f"malformed relation entry {rel!r}")
        relations.append(
            RelationHint(str(rel["anchor"]).strip(), str(rel.get("spatial", "")).strip(),
                         str(rel.get("semantic", "")).strip())
        )
    return CaptionResult(SemanticCaption(name, **fields), relations)


def parse_caption_reply(text: str) -> CaptionResult:
    try:
        data = extract_json(text)
    except ValueError as exc:
        raise CaptionParseError(f"caption reply is not JSON: {exc}") from exc
    return caption_from_dict(data)


# Canned attribute texts keyed by label.
CANNED_ATTRIBUTES = {
    "pillow": (
        "a soft, square pillow with a floral design",
        "filled with a soft material, providing compressibility and comfort",
        "intended for support when sitting or lying down, enhancing comfort in seating areas",
    ),
    "stool": (
        "A small, rounded seat with a padded top, typically covered in a beige fabric. "
        "The design is simple yet stylish, featuring a soft cushion that provides comfort for sitting.",
        "The stool is sturdy and stable, designed to support a person's weight effectively. "
        "It is lightweight, allowing for easy movement and positioning. "
        "It can be used as a seating solution or as a footrest due to its low profile.",
        "The stool serves primarily as a seating option but can also be used as a footrest. "
        "Additionally, its design allows it to function as a small table when needed, "
        "making it a versatile piece of furniture.",
    ),
}

CANNED_RELATIONS = {
    ("pillow", "sofa"): (
        "close by",
        "The pillow is an accessory placed on the sofa for comfort and support while sitting or lounging.",
    ),
}

_COLORS = ("white", "black", "gray", "beige", "brown", "blue", "green", "red")
_FINISHES = ("matte", "glossy", "textured", "smooth")
_MATERIALS = ("wood", "plastic", "metal", "fabric", "ceramic", "glass")
_WEIGHTS = ("light", "moderately heavy", "heavy")


def _label_choice(label: str, salt: str, options):
    digest = hashlib.sha256(f"{salt}:{label}".encode("utf-8")).digest()
    return options[int.from_bytes(digest[:4], "little") % len(options)]


def canned_caption(label: str, neighbors=()) -> CaptionResult:
    key = label.strip().lower()
    if key in CANNED_ATTRIBUTES:
        appearance, physical, affordance = CANNED_ATTRIBUTES[key]
    else:
        color = _label_choice(key, "color", _COLORS)
        finish = _label_choice(key, "finish", _FINISHES)
        material = _label_choice(key, "material", _MATERIALS)
        weight = _label_choice(key, "weight", _WEIGHTS)
        appearance = f"a {color} {key} with a {finish} finish"
        physical = f"made of {material}, {weight} and rigid"
        affordance = f"used as a {key} in everyday tasks"
    relations = []
    for other in neighbors:
        okey = other.strip().lower()
        if okey == key:
            continue
        spatial, semantic = CANNED_RELATIONS.get(
            (key, okey), ("close by", f"The {key} and the {okey} are used in the same area.")
        )
        relations.append(RelationHint(okey, spatial, semantic))
    return CaptionResult(SemanticCaption(key, appearance, physical, affordance), relations)


def visual_prompt(color_image: np.ndarray, bbox2d) -> np.ndarray:
    """Copy of the image with the detection outlined in red."""
    im = Image.fromarray(np.asarray(color_image, dtype=np.uint8))
    x, y, w, h = bbox2d
    ImageDraw.Draw(im).rectangle([x, y, x + w - 1, y + h - 1], outline=(255, 0, 0), width=2)
    return np.asarray(im)


def caption_object(color_image, detection, neighbors, backend) -> CaptionResult:
    """Caption one detection with its appearance/physical/affordance attributes.

    The mock backend returns the producer-supplied caption when the detection
    carries one, else the canned table entry for its label. A remote backend
    gets one retry on an unparseable reply before CaptionParseError is raised.
    """
    if not backend.remote:
        if detection.caption_hint is not None:
            return caption_from_dict(detection.caption_hint)
        return canned_caption(detection.label, neighbors)
    image = png_base64(visual_prompt(color_image, detection.bbox2d))
    others = ", ".join(sorted(set(neighbors))) or "none"
    error = None
    for attempt in range(2):
        reply = backend.ask("caption", images=[image], label=detection.label, neighbors=others)
        try:
            return parse_caption_reply(reply)
        except CaptionParseError as exc:
            error = exc
            log.warning("caption reply for %r unparseable (attempt %d): %s", detection.label, attempt + 1, exc)
    raise error
