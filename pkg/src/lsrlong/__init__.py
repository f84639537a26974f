"""Learned sparse retrieval for long documents.

Segment aggregation baselines, sequential-dependence scoring over sparse
translation logits, lexical baselines, first-stage retrieval, lambda
fitting, evaluation and segment diagnostics.
"""

from .aggregation import AggMethod, aggregate_score, rep_aggregate, score_max
from .core import (
    Document,
    Query,
    Segment,
    SparseVector,
    TranslationMatrix,
    Vocabulary,
    diagonal_mask,
    dot,
    rep_from_logits,
    segment_document,
)
from .index import InvertedIndex, build_index, retrieve_topk_segments, segments_to_doc_candidates
from .sdm import Lambdas, SdmConfig, brute_force_sdm, psi_so, psi_st, psi_su, sdm_features, sdm_score

__version__ = "0.1.0"

__all__ = [
    "AggMethod",
    "Document",
    "InvertedIndex",
    "Lambdas",
    "Query",
    "SdmConfig",
    "Segment",
    "SparseVector",
    "TranslationMatrix",
    "Vocabulary",
    "aggregate_score",
    "brute_force_sdm",
    "build_index",
    "diagonal_mask",
    "dot",
    "psi_so",
    "psi_st",
    "psi_su",
    "rep_aggregate",
    "rep_from_logits",
    "retrieve_topk_segments",
    "score_max",
    "sdm_features",
    "sdm_score",
    "segment_document",
    "segments_to_doc_candidates",
]
