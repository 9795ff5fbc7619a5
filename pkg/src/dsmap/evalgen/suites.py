"""Ready-made synthetic scene specs used by tests and the evaluation harness."""
from __future__ import annotations

import copy

DESK_TOP = 0.7


def _orbit(center, radius, height, frames, width=320, height_px=240):
    return {
        "image": {"width": width, "height": height_px, "vfov_deg": 60.0},
        "camera": {"orbit": {"center": list(center), "radius": radius, "height": height,
                             "frames": frames, "start_deg": 15.0, "sweep_deg": 360.0}},
    }


def single_object_spec(frames: int = 10) -> dict:
    spec = _orbit((0, 0, 0.15), 1.2, 0.6, frames)
    spec["objects"] = [{
        "name": "storage box", "shape": "box", "center": [0, 0, 0.15], "size": [0.4, 0.3, 0.3],
        "color": [200, 120, 40],
        "appearance": "a brown cardboard storage box with printed handles",
        "physical": "light corrugated board that folds flat",
        "affordance": "used for packing and moving household items",
    }]
    return spec


def two_object_spec(frames: int = 10) -> dict:
    spec = _orbit((0, 0, 0.15), 1.6, 0.7, frames)
    spec["objects"] = [
        {
            "name": "storage box", "shape": "box", "center": [-0.35, 0, 0.15], "size": [0.4, 0.3, 0.3],
            "color": [200, 120, 40],
            "appearance": "a brown cardboard storage box with printed handles",
            "physical": "light corrugated board that folds flat",
            "affordance": "used for packing and moving household items",
        },
        {
            "name": "ball", "shape": "sphere", "center": [0.4, 0.05, 0.15], "radius": 0.15,
            "color": [40, 90, 220],
            "appearance": "a blue rubber ball with a smooth surface",
            "physical": "bouncy and hollow",
            "affordance": "thrown or kicked in games",
        },
    ]
    return spec


def _on_desk(x, y, size):
    return [x, y, DESK_TOP + size[2] / 2.0]


_MUG = [0.09, 0.09, 0.11]
_BOOK = [0.16, 0.23, 0.05]


def ambiguity_spec(frames: int = 12) -> dict:
    """A desk with three mugs and three books, each next to its own distinct anchor object.

    Duplicate-name objects carry pairwise distinguishing attribute texts, and
    no two names share a token.
    """
    spec = _orbit((0, 0, DESK_TOP), 2.0, 1.1, frames, width=480, height_px=360)
    objs = [
        {"name": "desk", "center": [0, 0, DESK_TOP / 2.0], "size": [2.0, 1.2, DESK_TOP], "color": [150, 100, 60],
         "appearance": "a walnut desk with a satin finish", "physical": "solid timber frame on four legs",
         "affordance": "provides a surface for office work"},
        {"name": "laptop", "center": _on_desk(-0.5, 0.3, [0.32, 0.22, 0.03]), "size": [0.32, 0.22, 0.03],
         "color": [180, 180, 190], "appearance": "a silver laptop with a backlit keyboard",
         "physical": "aluminium shell, thin and portable", "affordance": "runs programs and browses the web"},
        {"name": "lamp", "shape": "sphere", "center": [0.2, 0.3, DESK_TOP + 0.08], "radius": 0.08,
         "color": [250, 240, 90], "appearance": "a round paper lamp glowing warm white",
         "physical": "featherweight globe shade", "affordance": "lights the workspace at night"},
        {"name": "plant", "center": _on_desk(0.85, 0.3, [0.12, 0.12, 0.25]), "size": [0.12, 0.12, 0.25],
         "color": [40, 160, 60], "appearance": "a leafy green fern in a pot",
         "physical": "living foliage in damp soil", "affordance": "decorates the room and cleans air"},
        {"name": "stapler", "center": _on_desk(-0.5, -0.3, [0.15, 0.05, 0.05]), "size": [0.15, 0.05, 0.05],
         "color": [20, 20, 20], "appearance": "a black metal stapler",
         "physical": "spring-loaded steel jaw", "affordance": "binds sheets of paper together"},
        {"name": "phone", "center": _on_desk(0.2, -0.3, [0.08, 0.15, 0.02]), "size": [0.08, 0.15, 0.02],
         "color": [90, 30, 140], "appearance": "a purple smartphone with a cracked screen",
         "physical": "glass slab with rounded corners", "affordance": "makes calls and sends messages"},
        {"name": "clock", "shape": "sphere", "center": [0.85, -0.3, DESK_TOP + 0.07], "radius": 0.07,
         "color": [230, 230, 230], "appearance": "a white alarm clock with twin bells",
         "physical": "ticking mechanical movement", "affordance": "wakes people at a set hour"},
        # duplicates: three mugs, three books
        {"name": "mug", "center": _on_desk(-0.8, 0.35, _MUG), "size": _MUG, "color": [220, 30, 30],
         "appearance": "a red ceramic mug with a glossy glaze",
         "physical": "heavy stoneware holding 350 ml", "affordance": "serves morning espresso",
         "relations": [{"anchor": 1, "semantic": "The mug sits beside the laptop so coffee is within reach while typing."}]},
        {"name": "mug", "center": _on_desk(-0.05, 0.35, _MUG), "size": _MUG, "color": [30, 60, 230],
         "appearance": "a blue enamel mug with white speckles",
         "physical": "lightweight steel body that resists dents", "affordance": "brews camping tea",
         "relations": [{"anchor": 2, "semantic": "The mug rests under the lamp light."}]},
        {"name": "mug", "center": _on_desk(0.6, 0.35, _MUG), "size": _MUG, "color": [240, 170, 20],
         "appearance": "a yellow porcelain mug with a gold rim",
         "physical": "thin fragile walls with a delicate handle", "affordance": "holds hot cocoa for guests",
         "relations": [{"anchor": 3, "semantic": "The mug stands next to the plant pot."}]},
        {"name": "book", "center": _on_desk(-0.8, -0.3, _BOOK), "size": _BOOK, "color": [20, 120, 110],
         "appearance": "a teal hardcover book with a cloth spine",
         "physical": "thick volume of six hundred pages", "affordance": "teaches organic chemistry",
         "relations": [{"anchor": 4, "semantic": "The book lies beside the stapler for binding notes."}]},
        {"name": "book", "center": _on_desk(-0.05, -0.3, _BOOK), "size": _BOOK, "color": [250, 110, 150],
         "appearance": "a pink paperback book with curled corners",
         "physical": "slim bendable softcover", "affordance": "entertains commuters with mystery stories",
         "relations": [{"anchor": 5, "semantic": "The book is kept near the phone during reading breaks."}]},
        {"name": "book", "center": _on_desk(0.55, -0.3, _BOOK), "size": _BOOK, "color": [100, 60, 20],
         "appearance": "a leather-bound book with embossed lettering",
         "physical": "antique binding and brittle parchment", "affordance": "preserves handwritten family recipes",
         "relations": [{"anchor": 6, "semantic": "The book sits by the clock on the shelf edge."}]},
    ]
    for o in objs:
        o.setdefault("shape", "box")
    spec["objects"] = objs
    return copy.deepcopy(spec)


SUITES = {
    "single": single_object_spec,
    "pair": two_object_spec,
    "ambiguity": ambiguity_spec,
}
