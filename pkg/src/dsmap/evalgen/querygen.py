"""Randomized grounding queries built from a map's captions and relations."""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from dsmap.scene import DsmMap

log = logging.getLogger(__name__)

ATTRIBUTE_KEYS = ("a_a", "a_p", "a_o")
_CAPTION_FIELDS = {"a_a": "appearance", "a_p": "physical", "a_o": "affordance"}
KINDS = ("unique", "multiple")


@dataclass(frozen=True)
class QueryGenConfig:
    """Gate distributions for the three attribute texts, plus suite sizes.

    An attribute is quoted in a query when its gate draw from N(mu, sigma)
    exceeds ``gate_cutoff``.
    """

    mu_a: float = 0.5
    sigma_a: float = 0.3
    mu_p: float = 0.5
    sigma_p: float = 0.3
    mu_o: float = 0.5
    sigma_o: float = 0.3
    gate_cutoff: float = 0.5
    n_unique: int = 10
    n_multiple: int = 30
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_a", "sigma_p", "sigma_o"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.n_unique < 0 or self.n_multiple < 0:
            raise ValueError("query counts must be >= 0")

    def gates(self) -> tuple:
        return ((self.mu_a, self.sigma_a), (self.mu_p, self.sigma_p), (self.mu_o, self.sigma_o))


@dataclass
class GeneratedQuery:
    text: str
    gt_object_id: int
    kind: str
    included_attrs: list = field(default_factory=list)
    anchor_id: Optional[int] = None
    relation: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown query kind {self.kind!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratedQuery":
        return cls(str(d["text"]), int(d["gt_object_id"]), str(d["kind"]), list(d.get("included_attrs", [])),
                   None if d.get("anchor_id") is None else int(d["anchor_id"]), d.get("relation"))


def _clean(text: str) -> str:
    return text.strip().rstrip(".;:!, ")


def compose_query(name: str, attrs, relation: Optional[str] = None, anchor_name: Optional[str] = None) -> str:
    parts = [f"the {name}"] + [a for a in attrs if a]
    text = ", ".join(parts)
    if relation is not None:
        text += f" that is {relation} the {anchor_name}"
    return text


def generate_queries(dsm: DsmMap, cfg: QueryGenConfig = QueryGenConfig()) -> list:
    """``cfg.n_unique`` unique-name and ``cfg.n_multiple`` duplicate-name queries.

    Multiple-kind targets must have at least one stored relation so the
    query can name an anchor; without any the multiple-kind count drops to
    zero with a warning.
    """
    if not dsm.objects:
        raise ValueError("cannot generate queries for an empty map")
    rng = np.random.default_rng(cfg.seed)
    counts = Counter(o.name for o in dsm.objects.values())
    related = {oid: dsm.relations_of(oid) for oid in sorted(dsm.objects)}
    pools = {
        "unique": [oid for oid in sorted(dsm.objects) if counts[dsm.objects[oid].name] == 1],
        "multiple": [oid for oid in sorted(dsm.objects)
                     if counts[dsm.objects[oid].name] > 1 and related[oid]],
    }
    wanted = {"unique": cfg.n_unique, "multiple": cfg.n_multiple}
    for kind in KINDS:
        if wanted[kind] and not pools[kind]:
            log.warning("no eligible targets for %s-kind queries; generating none", kind)
            wanted[kind] = 0
    out = []
    for kind in KINDS:
        for _ in range(wanted[kind]):
            target = dsm.objects[pools[kind][int(rng.integers(len(pools[kind])))]]
            draws = [rng.normal(mu, sigma) for mu, sigma in cfg.gates()]
            included, texts = [], []
            for key, g in zip(ATTRIBUTE_KEYS, draws):
                text = _clean(getattr(target.caption, _CAPTION_FIELDS[key]))
                if g > cfg.gate_cutoff and text:
                    included.append(key)
                    texts.append(text)
            rels = related[target.id]
            rel = rels[int(rng.integers(len(rels)))] if rels else None
            if rel is None:
                out.append(GeneratedQuery(compose_query(target.name, texts), target.id, kind, included))
            else:
                anchor_name = dsm.objects[rel.anchor_id].name
                out.append(GeneratedQuery(compose_query(target.name, texts, rel.r_g_descriptor, anchor_name),
                                          target.id, kind, included, rel.anchor_id, rel.r_g_descriptor))
    return out


def write_queries(path, queries) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(json.dumps(q.to_dict(), sort_keys=True) + "\n")


def read_queries(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(GeneratedQuery.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad query record: {exc}") from exc
    return out
