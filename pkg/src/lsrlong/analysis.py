"""Diagnostics on segment behaviour.

* which segment wins under Score-Max, tallied over query-document pairs;
* how the first segment's terms relate to later segments (unique,
  intersection, global) and how much of the first-segment score each
  category carries;
* splitting queries by the length of their relevant documents.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .core import Document, Query, dot

log = logging.getLogger(__name__)


def top_segment(q: Query, doc: Document) -> int:
    """Index of the highest-scoring segment; the earliest wins ties."""
    best, best_i = -1.0, 0
    for i, seg in enumerate(doc.segments):
        s = dot(q.rep, seg.rep)
        if s > best:
            best, best_i = s, i
    return best_i


def top_segment_histogram(
    queries: Mapping[str, Query],
    docs: Mapping[str, Document],
    pairs: Iterable[tuple[str, str]],
    relevant_only: bool = False,
    qrels: Mapping[str, Mapping[str, int]] | None = None,
    rel_threshold: int = 1,
) -> dict[int, int]:
    if relevant_only and qrels is None:
        raise ValueError("relevant_only requires qrels")
    counts: Counter = Counter()
    skipped = 0
    for qid, doc_id in pairs:
        if relevant_only and qrels.get(qid, {}).get(doc_id, 0) < rel_threshold:
            continue
        if doc_id not in docs or qid not in queries:
            skipped += 1
            continue
        counts[top_segment(queries[qid], docs[doc_id])] += 1
    if skipped:
        log.warning("top_segment_histogram: skipped %d pairs with unknown query or document", skipped)
    return dict(sorted(counts.items()))


@dataclass(frozen=True)
class TermCategory:
    """First-segment terms split by where else they occur."""

    unique: frozenset
    intersection: dict = field(default_factory=dict)  # seg_index -> frozenset
    global_: frozenset = frozenset()

    @property
    def intersection_only(self) -> frozenset:
        """Shared terms that are not global."""
        shared = frozenset().union(*self.intersection.values()) if self.intersection else frozenset()
        return shared - self.global_


def categorize_terms(doc: Document, compare_segs: Sequence[int]) -> TermCategory:
    if not compare_segs:
        raise ValueError("compare_segs must not be empty")
    missing = [j for j in compare_segs if not 0 <= j < len(doc.segments)]
    if missing:
        raise IndexError(f"document {doc.doc_id} has {len(doc.segments)} segments; cannot compare with {missing}")
    first = set(doc.segments[0].rep.ids)
    others = {j: set(doc.segments[j].rep.ids) for j in compare_segs}
    intersection = {j: frozenset(first & s) for j, s in others.items()}
    shared_any = set().union(*others.values())
    global_ = first.intersection(*others.values())
    return TermCategory(frozenset(first - shared_any), intersection, frozenset(global_))


def category_fractions(doc: Document, cats: TermCategory) -> dict[str, float]:
    """Category sizes as fractions of the first segment's support."""
    n = len(doc.segments[0].rep)
    if n == 0:
        return {}
    out = {"unique": len(cats.unique) / n, "global": len(cats.global_) / n}
    for j, terms in sorted(cats.intersection.items()):
        out[f"intersection_{j}"] = len(terms) / n
    return out


def term_influence(q: Query, doc: Document, cats: TermCategory) -> tuple[float, float, float]:
    """Shares of the first-segment score carried by unique, intersection-only and global terms."""
    seg0 = doc.segments[0].rep
    total = dot(q.rep, seg0)
    if total <= 0:
        raise ValueError(f"query {q.qid} does not match the first segment of {doc.doc_id}")
    qrep = q.rep

    def share(terms):
        return math.fsum(qrep.get(t) * seg0.get(t) for t in terms) / total

    return share(cats.unique), share(cats.intersection_only), share(cats.global_)


@dataclass(frozen=True)
class LengthSplit:
    short_qids: frozenset
    long_qids: frozenset
    short_candidates: dict
    long_candidates: dict


def _num_segments(corpus, doc_id) -> int:
    d = corpus[doc_id]
    return len(d) if isinstance(d, Document) else int(d)


def split_by_length(
    qrels: Mapping[str, Mapping[str, int]],
    corpus: Mapping[str, Document | int],
    candidates: Mapping[str, Sequence[tuple[str, float]]],
    seg_threshold: int = 2,
    rel_threshold: int = 1,
) -> LengthSplit:
    """Queries whose relevant documents all have at most ``seg_threshold`` segments go short.

    Everything else, including queries with both short and long relevant
    documents, goes long, and long-side candidate lists lose their short
    documents. ``corpus`` maps doc_id to a Document or a segment count.
    """
    missing = sorted({d for docs in qrels.values() for d in docs if d not in corpus})
    if missing:
        raise KeyError(f"judged documents missing from corpus: {', '.join(missing)}")
    short, long_ = set(), set()
    for qid in candidates:
        relevant = [d for d, g in qrels.get(qid, {}).items() if g >= rel_threshold]
        if not relevant:
            continue
        if all(_num_segments(corpus, d) <= seg_threshold for d in relevant):
            short.add(qid)
        else:
            long_.add(qid)
    unknown = sorted({d for qid in long_ for d, _ in candidates[qid] if d not in corpus})
    if unknown:
        raise KeyError(f"candidate documents missing from corpus: {', '.join(unknown)}")
    short_c = {q: list(r) for q, r in candidates.items() if q in short}
    long_c = {
        q: [(d, s) for d, s in r if _num_segments(corpus, d) > seg_threshold]
        for q, r in candidates.items()
        if q in long_
    }
    return LengthSplit(frozenset(short), frozenset(long_), short_c, long_c)


def split_statistics(split: LengthSplit, corpus, max_segs: int = 5) -> list[dict]:
    """Query counts and candidate counts per '#segs <= k' bucket for each side."""
    rows = []
    for side, qids, cands in (
        ("short", split.short_qids, split.short_candidates),
        ("long", split.long_qids, split.long_candidates),
    ):
        row = {"side": side, "queries": len(qids)}
        lengths = [_num_segments(corpus, d) for r in cands.values() for d, _ in r if d in corpus]
        for k in range(1, max_segs + 1):
            row[f"candidates_segs_le_{k}"] = sum(1 for n in lengths if n <= k)
        rows.append(row)
    return rows
