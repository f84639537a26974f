"""Lexical baselines: BM25, BM25 with sequential-dependence features, RM3."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4
    sdm_weights: tuple[float, float, float] = (0.85, 0.1, 0.05)
    window: int = 8

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not 0 <= self.b <= 1:
            raise ValueError("b must lie in [0, 1]")
        if len(self.sdm_weights) != 3 or min(self.sdm_weights) < 0:
            raise ValueError("sdm_weights must be three non-negative numbers")
        if abs(sum(self.sdm_weights) - 1.0) > 1e-9:
            raise ValueError(f"sdm_weights must sum to 1, got {self.sdm_weights}")
        if self.window < 2:
            raise ValueError("window must be >= 2")


@dataclass(frozen=True)
class CorpusStats:
    doc_count: int
    avg_doc_len: float
    df: dict = field(repr=False)
    doc_len: dict = field(repr=False)

    @classmethod
    def build(cls, docs: Mapping[str, Sequence[Hashable]]) -> "CorpusStats":
        df: Counter = Counter()
        doc_len = {}
        for doc_id, tokens in docs.items():
            doc_len[doc_id] = len(tokens)
            df.update(set(tokens))
        n = len(doc_len)
        avg = sum(doc_len.values()) / n if n else 0.0
        return cls(n, avg, dict(df), doc_len)


def idf(df: int, n: int) -> float:
    return math.log((n - df + 0.5) / (df + 0.5) + 1.0)


def _saturate(tf: float, dl: int, avg_len: float, params: Bm25Params) -> float:
    norm = 1.0 - params.b + params.b * dl / avg_len if avg_len > 0 else 1.0
    return tf * (params.k1 + 1.0) / (tf + params.k1 * norm)


def _check(stats: CorpusStats):
    if stats.doc_count == 0:
        raise ValueError("empty corpus: BM25 statistics are undefined")


def _score(items: Iterable[tuple[Hashable, float]], doc_tokens, stats: CorpusStats, params: Bm25Params) -> float:
    _check(stats)
    tf = Counter(doc_tokens)
    dl = len(doc_tokens)
    total = 0.0
    for t, qw in items:
        f = tf.get(t, 0)
        if f:
            total += qw * idf(stats.df.get(t, 0), stats.doc_count) * _saturate(f, dl, stats.avg_doc_len, params)
    return total


def bm25_score(q_terms: Sequence[Hashable], doc_tokens: Sequence[Hashable], stats: CorpusStats, params: Bm25Params = Bm25Params()) -> float:
    """Sum of BM25 term scores, one per query term occurrence."""
    return _score(((t, 1.0) for t in q_terms), doc_tokens, stats, params)


def bm25_weighted_score(q_weights: Mapping[Hashable, float], doc_tokens, stats: CorpusStats, params: Bm25Params = Bm25Params()) -> float:
    """BM25 with per-term query weights (used for RM3-expanded queries)."""
    return _score(q_weights.items(), doc_tokens, stats, params)


def ordered_count(a, b, tokens: Sequence) -> int:
    """Occurrences of ``a`` immediately followed by ``b``."""
    return sum(1 for x, y in zip(tokens, tokens[1:]) if x == a and y == b)


def unordered_count(a, b, tokens: Sequence, window: int) -> int:
    """Position pairs holding ``a`` and ``b`` in either order within a span of ``window`` tokens."""
    pa = [i for i, t in enumerate(tokens) if t == a]
    pb = [i for i, t in enumerate(tokens) if t == b]
    if a == b:
        return sum(1 for x in range(len(pa)) for y in range(x + 1, len(pa)) if pa[y] - pa[x] < window)
    return sum(1 for i in pa for j in pb if abs(i - j) < window)


@dataclass(frozen=True)
class PhraseStats:
    """Bigram document frequencies over the set of documents being ranked."""

    doc_count: int
    ordered_df: dict
    unordered_df: dict


def phrase_stats(q_terms: Sequence[Hashable], docs: Iterable[Sequence[Hashable]], window: int = 8) -> PhraseStats:
    bigrams = list(zip(q_terms, q_terms[1:]))
    odf: Counter = Counter()
    udf: Counter = Counter()
    n = 0
    for tokens in docs:
        n += 1
        for a, b in set(bigrams):
            if ordered_count(a, b, tokens):
                odf[(a, b)] += 1
            if unordered_count(a, b, tokens, window):
                udf[(a, b)] += 1
    return PhraseStats(n, dict(odf), dict(udf))


def bm25_sdm_score(q_terms: Sequence[Hashable], doc_tokens: Sequence[Hashable], stats: CorpusStats, params: Bm25Params = Bm25Params(), phrases: PhraseStats | None = None) -> float:
    """w_T * BM25 + w_O * BM25 over ordered bigrams + w_U * BM25 over unordered windows.

    Bigram matches are treated as pseudo-terms whose df comes from ``phrases``
    (the candidate set); without it the doc alone is the collection.
    """
    w_t, w_o, w_u = params.sdm_weights
    unigram = bm25_score(q_terms, doc_tokens, stats, params)
    bigrams = list(zip(q_terms, q_terms[1:]))
    if not bigrams:
        return w_t * unigram
    if phrases is None:
        phrases = phrase_stats(q_terms, [doc_tokens], params.window)
    dl = len(doc_tokens)
    o = u = 0.0
    for a, b in bigrams:
        tf_o = ordered_count(a, b, doc_tokens)
        if tf_o:
            o += idf(phrases.ordered_df.get((a, b), 0), phrases.doc_count) * _saturate(tf_o, dl, stats.avg_doc_len, params)
        tf_u = unordered_count(a, b, doc_tokens, params.window)
        if tf_u:
            u += idf(phrases.unordered_df.get((a, b), 0), phrases.doc_count) * _saturate(tf_u, dl, stats.avg_doc_len, params)
    return w_t * unigram + w_o * o + w_u * u


def _normalize(weights: Mapping) -> dict:
    z = math.fsum(weights.values())
    return {t: w / z for t, w in weights.items()} if z > 0 else dict(weights)


def rm3_expand(
    q_terms: Sequence[Hashable],
    top_docs: Sequence[tuple[Sequence[Hashable], float]],
    fb_docs: int = 10,
    fb_terms: int = 10,
    alpha: float = 0.5,
) -> dict:
    """Interpolate the query with a relevance model built from feedback documents.

    ``top_docs`` holds (tokens, retrieval score) in rank order. Returns a
    term -> weight map summing to one.
    """
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    original = _normalize(Counter(q_terms))
    feedback = [(toks, s) for toks, s in top_docs[:fb_docs] if len(toks)]
    if not feedback:
        return original
    scores = [float(s) for _, s in feedback]
    if min(scores) < 0:
        raise ValueError("feedback scores must be non-negative")
    z = math.fsum(scores)
    prior = [s / z for s in scores] if z > 0 else [1.0 / len(scores)] * len(scores)
    rm: dict = {}
    for (toks, _), p in zip(feedback, prior):
        for t, c in Counter(toks).items():
            rm[t] = rm.get(t, 0.0) + p * c / len(toks)
    top = sorted(rm.items(), key=lambda kv: (-kv[1], kv[0]))[:fb_terms]
    rm = _normalize(dict(top))
    mixed = {t: alpha * original.get(t, 0.0) + (1 - alpha) * rm.get(t, 0.0) for t in sorted(set(original) | set(rm))}
    return _normalize({t: w for t, w in mixed.items() if w > 0})
