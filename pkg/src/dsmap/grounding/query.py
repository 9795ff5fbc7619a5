"""Query parsing, fuzzy candidate extraction and latent relation filtering."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from dsmap.errors import NoCandidateError, QueryError
from dsmap.perception.backends import extract_json
from dsmap.scene import DsmMap
from dsmap.text import canonical, content_tokens, jaccard, tokens

log = logging.getLogger(__name__)

FUZZY_THRESHOLD = 0.34

_REQUEST_PREFIXES = (
    "help me get", "help me find", "show me", "bring me", "give me", "where is", "pick up",
    "please", "find", "get", "locate", "grab", "fetch",
)
_ARTICLES = ("the", "a", "an", "some", "my")
# longest first so "in front of" wins over "in"
_RELATION_MARKERS = sorted(
    (
        "next to", "close to", "near", "beside", "by", "on top of", "on", "above", "below",
        "under", "underneath", "inside", "in front of", "in", "behind", "left of", "right of",
        "left-of", "right-of", "in-front-of", "at",
    ),
    key=len,
    reverse=True,
)
_MARKER_RE = re.compile(r"\s(" + "|".join(re.escape(m) for m in _RELATION_MARKERS) + r")\s")
# trailing purpose/feature clauses are attributes, not part of the noun phrase
_MODIFIER_RE = re.compile(r"\s(?:for|with|that|which|used|made)\s")
_THAT_IS_RE = re.compile(r"\s(?:that|which|who)\s+(?:is|are)\s")


@dataclass
class GroundingQuery:
    raw: str
    target_phrase: str
    anchor_phrases: list = field(default_factory=list)

    def __post_init__(self):
        if not self.target_phrase.strip():
            raise QueryError(f"no target object in query {self.raw!r}")

    def to_dict(self) -> dict:
        return {"raw": self.raw, "target": self.target_phrase, "anchors": list(self.anchor_phrases)}


def _strip_articles(phrase: str) -> str:
    words = phrase.strip(" ,.;:!?\"'").split()
    while words and words[0] in _ARTICLES:
        words = words[1:]
    return " ".join(words)


def parse_query_rules(q: str) -> GroundingQuery:
    """Split a query of the form 'the X[, attrs...][ that is REL the Y]' or 'X REL Y'."""
    text = canonical(q).rstrip(" .!?")
    if not text:
        raise QueryError("empty query")
    for prefix in _REQUEST_PREFIXES:
        if text.startswith(prefix + " "):
            text = text[len(prefix) + 1:]
            break
    anchors = []
    clauses = list(_THAT_IS_RE.finditer(text))
    if clauses:
        last = clauses[-1]
        rel = " " + text[last.end():] + " "
        m = _MARKER_RE.match(rel)
        if m is None:
            # unknown relation word: take the single word before the anchor noun phrase
            parts = rel.split(None, 1)
            rest = parts[1] if len(parts) > 1 else ""
        else:
            rest = rel[m.end():]
        anchor = _strip_articles(rest.split(",")[0])
        if anchor:
            anchors.append(anchor)
        text = text[:last.start()]
    head = text.split(",")[0]
    m = _MARKER_RE.search(" " + head + " ")
    if m:
        start = m.start() - 1  # undo the leading pad
        rest = (" " + head + " ")[m.end():]
        anchor = _strip_articles(rest)
        if anchor:
            anchors.insert(0, anchor)
        head = head[:max(start, 0)]
    head = _MODIFIER_RE.split(" " + head + " ", maxsplit=1)[0]
    target = _strip_articles(head)
    if not target:
        raise QueryError(f"no target object in query {q!r}")
    return GroundingQuery(q, target, anchors)


def parse_query(q: str, backend) -> GroundingQuery:
    """Extract the target phrase and anchor phrases from a free-form query."""
    if not q or not q.strip():
        raise QueryError("empty query")
    if backend.remote:
        for _ in range(2):
            try:
                reply = extract_json(backend.ask("parse_query", query=q))
                target = str(reply.get("target") or "").strip().lower()
                anchors = [str(a).strip().lower() for a in reply.get("anchors") or [] if str(a).strip()]
                if target:
                    return GroundingQuery(q, _strip_articles(target), [_strip_articles(a) for a in anchors])
            except (ValueError, AttributeError) as exc:
                log.warning("query parse reply unusable: %s", exc)
        log.warning("falling back to rule-based query parsing")
    return parse_query_rules(q)


def fuzzy_score(phrase: str, name: str) -> float:
    """max(token Jaccard, length ratio when one normalized string contains the other)."""
    a, b = canonical(phrase), canonical(name)
    if not a or not b:
        return 0.0
    jac = jaccard(set(tokens(a)), set(tokens(b)))
    sub = 0.0
    if a in b or b in a:
        sub = min(len(a), len(b)) / max(len(a), len(b))
    return max(jac, sub)


def fuzzy_match(phrase: str, dsm: DsmMap, threshold: float = FUZZY_THRESHOLD) -> list:
    """(object id, score) pairs scoring at least ``threshold``, best first, ties by id."""
    hits = []
    for oid in sorted(dsm.objects):
        score = fuzzy_score(phrase, dsm.objects[oid].name)
        if score >= threshold:
            hits.append((oid, score))
    hits.sort(key=lambda h: (-h[1], h[0]))
    return hits


def caption_text(obj, use_attributes: bool = True) -> str:
    return obj.caption.text() if use_attributes else obj.caption.name


def extract_candidates(q: GroundingQuery, dsm: DsmMap, use_attributes: bool = True,
                       threshold: float = FUZZY_THRESHOLD) -> tuple[list, list]:
    """Target candidates and anchor candidates as sorted id lists.

    When the target phrase matches no name, every object whose caption shares
    a content token with the query becomes a target candidate.
    """
    targets = sorted(oid for oid, _ in fuzzy_match(q.target_phrase, dsm, threshold))
    anchors = set()
    for phrase in q.anchor_phrases:
        anchors.update(oid for oid, _ in fuzzy_match(phrase, dsm, threshold))
    if not targets:
        query_tokens = content_tokens(q.raw)
        targets = sorted(
            oid for oid, obj in dsm.objects.items()
            if content_tokens(caption_text(obj, use_attributes)) & query_tokens
        )
    if not targets:
        raise NoCandidateError(f"no object in the map matches {q.target_phrase!r}")
    return targets, sorted(anchors)


@dataclass(frozen=True)
class RelationSentence:
    subject_id: int
    anchor_id: int
    text: str

    def to_dict(self) -> dict:
        return {"subject_id": self.subject_id, "anchor_id": self.anchor_id, "text": self.text}


def relation_sentence(subject_name: str, anchor_name: str, descriptor: str, distance: float, r_s: str) -> str:
    spatial = f"{descriptor} ({distance:.2f} m)"
    return (
        f"Between {subject_name} and {anchor_name}, the spatial relation is {spatial} "
        f"and the semantic relation is {r_s}"
    )


def relation_sentences(targets, anchors, dsm: DsmMap) -> list:
    """One sentence per stored relation from a target to an anchor or another target."""
    tset = set(targets)
    allowed = tset | set(anchors)
    out = []
    for (s, a), rel in sorted(dsm.relations.items()):
        if s in tset and a in allowed:
            text = relation_sentence(dsm.objects[s].name, dsm.objects[a].name,
                                     rel.r_g_descriptor, rel.r_g_distance, rel.r_s)
            out.append(RelationSentence(s, a, text))
    return out


@dataclass
class TopK:
    sentences: list
    object_ids: list
    fallback: bool = False


def _rank_by_overlap(sentences, q: str) -> list:
    qt = content_tokens(q)
    return sorted(
        sentences,
        key=lambda s: (-len(content_tokens(s.text) & qt), s.subject_id, s.anchor_id),
    )


def _objects_of(sentences) -> list:
    seen = []
    for s in sentences:
        for oid in (s.subject_id, s.anchor_id):
            if oid not in seen:
                seen.append(oid)
    return seen


def filter_topk(sentences, q: str, k: int, backend, targets=()) -> TopK:
    """Keep the ``k`` relation sentences most relevant to the query.

    With no sentences the target candidates pass through unchanged.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not sentences:
        return TopK([], list(targets))
    ranked = None
    fallback = False
    if backend.remote:
        listing = "\n".join(f"{i}. {s.text}" for i, s in enumerate(sentences))
        for _ in range(2):
            try:
                order = extract_json(backend.ask("rank_relations", query=q, sentences=listing))["ranking"]
                order = [int(i) for i in order]
                if not order or any(i < 0 or i >= len(sentences) for i in order):
                    raise ValueError("ranking references unknown relations")
                seen = []
                for i in order:
                    if i not in seen:
                        seen.append(i)
                ranked = [sentences[i] for i in seen]
                ranked += [s for i, s in enumerate(sentences) if i not in seen]
                break
            except (ValueError, KeyError, TypeError) as exc:
                log.warning("relation ranking reply unusable: %s", exc)
        if ranked is None:
            fallback = True
    if ranked is None:
        ranked = _rank_by_overlap(sentences, q)
    top = ranked[:k]
    return TopK(top, _objects_of(top), fallback)
