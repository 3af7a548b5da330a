"""Dataset search: report the datasets of a repository whose percentile or
top-k preference measures satisfy a query, up to an additive slack."""

from .expr import And, Or, PrefPred, PtilePred
from .geom import BoundingBox, Rect
from .pref import build_pref_index, query_pref, query_pref_expression
from .ptile import (
    build_expression_index,
    build_range_index,
    build_threshold_index,
    query_expression,
    query_range,
    query_threshold,
)
from .synopsis import ExactSynopsis, HistogramSynopsis

__all__ = [
    "And", "Or", "PrefPred", "PtilePred", "BoundingBox", "Rect",
    "build_pref_index", "query_pref", "query_pref_expression",
    "build_threshold_index", "build_range_index", "build_expression_index",
    "query_threshold", "query_range", "query_expression",
    "ExactSynopsis", "HistogramSynopsis",
]
