from .exact1d import Exact1DIndex, build_exact_1d, query_exact_1d
from .families import (
    comb_rect_indices,
    enumerate_comb_rectangles,
    enumerate_maximal_pairs,
    maximal_pair_indices,
    rect_counts,
)
from .index import (
    CapExceeded,
    PtileConfig,
    PtileIndex,
    QueryResult,
    build_expression_index,
    build_range_index,
    build_threshold_index,
    index_from_coresets,
    iter_range,
    iter_threshold,
    query_expression,
    query_range,
    query_threshold,
)

__all__ = [
    "CapExceeded",
    "Exact1DIndex",
    "PtileConfig",
    "PtileIndex",
    "QueryResult",
    "build_exact_1d",
    "build_expression_index",
    "build_range_index",
    "build_threshold_index",
    "comb_rect_indices",
    "enumerate_comb_rectangles",
    "enumerate_maximal_pairs",
    "index_from_coresets",
    "iter_range",
    "iter_threshold",
    "maximal_pair_indices",
    "query_exact_1d",
    "query_expression",
    "query_range",
    "query_threshold",
    "rect_counts",
]
