"""Shapley feature attributions for black-box ranking models."""

from .core import (
    AttributionVector, Coalition, CorpusError, Document, FeatureSpace, Instance, Query, TokenizerConfig,
    apply_coalition, build_feature_space, make_instance, tokenize,
)
from .evaluation import FidelityReport, fidelity, kendall_tau, reconstruct_ordering, weighted_kendall_tau
from .grem import Grem, RelevanceAssignment, grem_value, infer_relevance, ndcg, parse_value_fn
from .methods import METHODS, AttributionProblem, attribute
from .rankers import BM25Params, BM25Ranker, LinearRanker, Ranking, bm25_rank, linear_ranker, parse_ranker
from .shapley import GameOracle, SamplerConfig, exact_rankshap, kernel_rankshap, permutation_rankshap

__version__ = "0.1.0"

__all__ = [
    "AttributionProblem", "AttributionVector", "BM25Params", "BM25Ranker", "Coalition", "CorpusError",
    "Document", "FeatureSpace", "FidelityReport", "GameOracle", "Grem", "Instance", "LinearRanker",
    "METHODS", "Query", "Ranking", "RelevanceAssignment", "SamplerConfig", "TokenizerConfig",
    "apply_coalition", "attribute", "bm25_rank", "build_feature_space", "exact_rankshap", "fidelity",
    "grem_value", "infer_relevance", "kendall_tau", "kernel_rankshap", "linear_ranker", "make_instance",
    "ndcg", "parse_ranker", "parse_value_fn", "permutation_rankshap", "reconstruct_ordering", "tokenize",
    "weighted_kendall_tau",
]
