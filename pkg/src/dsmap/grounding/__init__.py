"""Language grounding over a built map."""
from dsmap.grounding.pipeline import GroundingConfig, GroundingResult, ground, mock_choice, render_views
from dsmap.grounding.query import (
    GroundingQuery,
    RelationSentence,
    TopK,
    extract_candidates,
    filter_topk,
    fuzzy_match,
    fuzzy_score,
    parse_query,
    parse_query_rules,
    relation_sentence,
    relation_sentences,
)
from dsmap.grounding.render import RenderSpec, RenderedView, place_camera, render_level

__all__ = [
    "GroundingConfig", "GroundingQuery", "GroundingResult", "RelationSentence", "RenderSpec",
    "RenderedView", "TopK", "extract_candidates", "filter_topk", "fuzzy_match", "fuzzy_score",
    "ground", "mock_choice", "parse_query", "parse_query_rules", "place_camera", "relation_sentence",
    "relation_sentences", "render_level", "render_views",
]
