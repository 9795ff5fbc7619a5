"""Query generation, synthetic scenes and evaluation metrics."""
from dsmap.evalgen.labels import map_labels, mock_label
from dsmap.evalgen.metrics import GroundReport, SegReport, acc_at, confusion_scores, ground_report, seg_metrics
from dsmap.evalgen.querygen import GeneratedQuery, QueryGenConfig, generate_queries, read_queries, write_queries

__all__ = [
    "GeneratedQuery", "GroundReport", "QueryGenConfig", "SegReport", "acc_at", "confusion_scores",
    "generate_queries", "ground_report", "map_labels", "mock_label", "read_queries", "seg_metrics",
    "write_queries",
]
