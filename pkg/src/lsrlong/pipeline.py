"""Query-level orchestration shared by the CLI and the end-to-end tests."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence, TypeVar

from .aggregation import AggMethod, aggregate_score
from .bm25 import (
    Bm25Params,
    CorpusStats,
    bm25_score,
    bm25_sdm_score,
    bm25_weighted_score,
    phrase_stats,
    rm3_expand,
)
from .core import Document, Query
from .evaluation import Run, rank_by_score
from .index import InvertedIndex, doc_candidates
from .sdm import Lambdas, SdmConfig, sdm_score

T = TypeVar("T")
R = TypeVar("R")

SCORERS = ("agg", "sdm", "bm25", "bm25-sdm", "bm25-rm3")


def pmap(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> list[R]:
    """Order-preserving map; the result never depends on ``threads``."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def retrieve(idx: InvertedIndex, queries: Mapping[str, Query], topk_segments: int = 10_000, depth: int = 200, threads: int = 1) -> Run:
    qids = list(queries)
    lists = pmap(lambda qid: doc_candidates(idx, queries[qid].rep, topk_segments, depth), qids, threads)
    return dict(zip(qids, lists))


@dataclass(frozen=True)
class RerankSettings:
    """``num_segments`` truncates documents for every scorer, overriding ``sdm.num_segments``."""

    scorer: str = "agg"
    agg: str = "score-max"
    num_segments: int = 1
    sdm: SdmConfig = SdmConfig()
    lambdas: Lambdas = Lambdas()
    bm25: Bm25Params = Bm25Params()
    rm3_fb_docs: int = 10
    rm3_fb_terms: int = 10
    rm3_alpha: float = 0.5

    def __post_init__(self):
        if self.scorer not in SCORERS:
            raise ValueError(f"scorer must be one of {SCORERS}, got {self.scorer!r}")


@dataclass
class _Lexical:
    stats: CorpusStats
    tokens: dict = field(repr=False)


def _lexical(docs: Mapping[str, Document], k: int) -> _Lexical:
    tokens = {d: [t for seg in doc.segments[:k] for t in seg.tokens] for d, doc in docs.items()}
    return _Lexical(CorpusStats.build(tokens), tokens)


def rerank(
    queries: Mapping[str, Query],
    docs: Mapping[str, Document],
    candidates: Mapping[str, Sequence[tuple[str, float]]],
    settings: RerankSettings,
    threads: int = 1,
) -> Run:
    """Re-score each query's candidates; ties keep candidate order."""
    missing = sorted({d for r in candidates.values() for d, _ in r if d not in docs})
    if missing:
        raise KeyError(f"candidate documents missing from corpus: {', '.join(missing[:10])}")
    qids = [q for q in candidates if q in queries]
    k = settings.num_segments
    lex = _lexical(docs, k) if settings.scorer.startswith("bm25") else None
    method = AggMethod.parse(settings.agg, k)
    cfg = replace(settings.sdm, num_segments=k)

    def one(qid: str) -> list[tuple[str, float]]:
        q = queries[qid]
        cand = [d for d, _ in candidates[qid]]
        if settings.scorer == "agg":
            scored = [(d, aggregate_score(q.rep, docs[d], method)) for d in cand]
        elif settings.scorer == "sdm":
            scored = [(d, sdm_score(q, docs[d], cfg, settings.lambdas)) for d in cand]
        elif settings.scorer == "bm25":
            scored = [(d, bm25_score(q.ids, lex.tokens[d], lex.stats, settings.bm25)) for d in cand]
        elif settings.scorer == "bm25-sdm":
            ph = phrase_stats(q.ids, (lex.tokens[d] for d in cand), settings.bm25.window)
            scored = [(d, bm25_sdm_score(q.ids, lex.tokens[d], lex.stats, settings.bm25, ph)) for d in cand]
        else:
            first = rank_by_score((d, bm25_score(q.ids, lex.tokens[d], lex.stats, settings.bm25)) for d in cand)
            expanded = rm3_expand(
                q.ids,
                [(lex.tokens[d], s) for d, s in first],
                settings.rm3_fb_docs,
                settings.rm3_fb_terms,
                settings.rm3_alpha,
            )
            scored = [(d, bm25_weighted_score(expanded, lex.tokens[d], lex.stats, settings.bm25)) for d in cand]
        return rank_by_score(scored)

    return dict(zip(qids, pmap(one, qids, threads)))


def candidate_pairs(candidates: Mapping[str, Iterable[tuple[str, float]]]) -> list[tuple[str, str]]:
    return [(qid, d) for qid, r in candidates.items() for d, _ in r]
