"""Domain types and the primitive operations shared by every scorer.

Term ids index into a :class:`Vocabulary`. Sparse vectors keep their
entries sorted by term id so that ``dot`` is a linear merge.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_MAX_SEG_LEN = 512


class CorruptSegmentError(ValueError):
    """Raised when a segment's tokens and logit rows disagree."""


class Vocabulary:
    """Bijective map between term strings and dense integer ids."""

    def __init__(self, terms: Iterable[str]):
        self.id_to_term: list[str] = []
        self.term_to_id: dict[str, int] = {}
        for term in terms:
            if term not in self.term_to_id:
                self.term_to_id[term] = len(self.id_to_term)
                self.id_to_term.append(term)
        if not self.id_to_term:
            raise ValueError("vocabulary must contain at least one term")

    def __len__(self) -> int:
        return len(self.id_to_term)

    def __contains__(self, term: str) -> bool:
        return term in self.term_to_id

    @property
    def oov_id(self) -> int:
        """Id given to out-of-vocabulary query terms; no posting ever carries it."""
        return len(self.id_to_term)

    def lookup(self, term: str) -> int:
        return self.term_to_id.get(term, self.oov_id)

    def term(self, term_id: int) -> str:
        if term_id == self.oov_id:
            return "<oov>"
        return self.id_to_term[term_id]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for term in self.id_to_term:
                f.write(term + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            return cls(line.rstrip("\n") for line in f)


def _check_weight(w: float) -> float:
    w = float(w)
    if not math.isfinite(w) or w < 0:
        raise ValueError(f"weights must be finite and non-negative, got {w}")
    return w


@dataclass(frozen=True)
class SparseVector:
    """Non-negative term weights stored as parallel, id-sorted tuples."""

    ids: tuple[int, ...] = ()
    weights: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.ids) != len(self.weights):
            raise ValueError("ids and weights differ in length")
        for a, b in zip(self.ids, self.ids[1:]):
            if a >= b:
                raise ValueError("term ids must be strictly increasing")
        for w in self.weights:
            if _check_weight(w) == 0.0:
                raise ValueError("zero weights must not be stored")

    @classmethod
    def from_dict(cls, weights: Mapping[int, float]) -> "SparseVector":
        items = sorted((int(t), _check_weight(w)) for t, w in weights.items())
        items = [(t, w) for t, w in items if w > 0.0]
        return cls(tuple(t for t, _ in items), tuple(w for _, w in items))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]]) -> "SparseVector":
        """Build from (id, weight) pairs, summing repeated ids."""
        acc: dict[int, float] = {}
        for t, w in pairs:
            acc[int(t)] = acc.get(int(t), 0.0) + _check_weight(w)
        return cls.from_dict(acc)

    def __len__(self) -> int:
        return len(self.ids)

    def items(self):
        return zip(self.ids, self.weights)

    def to_dict(self) -> dict[int, float]:
        return dict(zip(self.ids, self.weights))

    def get(self, term_id: int, default: float = 0.0) -> float:
        i = bisect_left(self.ids, term_id)
        if i < len(self.ids) and self.ids[i] == term_id:
            return self.weights[i]
        return default


def dot(q: SparseVector, d: SparseVector) -> float:
    """Sum of products of weights over shared term ids."""
    i = j = 0
    total = 0.0
    qi, qw, di, dw = q.ids, q.weights, d.ids, d.weights
    while i < len(qi) and j < len(di):
        if qi[i] == di[j]:
            total += qw[i] * dw[j]
            i += 1
            j += 1
        elif qi[i] < di[j]:
            i += 1
        else:
            j += 1
    return total


@dataclass(frozen=True)
class TranslationMatrix:
    """Per-position sparse translation scores; ``rows[r][v]`` is W[r][v]."""

    rows: tuple[Mapping[int, float], ...]

    def __post_init__(self):
        for row in self.rows:
            for w in row.values():
                if not math.isfinite(w) or w < 0:
                    raise ValueError(f"translation scores must be finite and non-negative, got {w}")

    @classmethod
    def from_rows(cls, rows: Iterable[Mapping[int, float]]) -> "TranslationMatrix":
        return cls(tuple({int(v): float(w) for v, w in row.items()} for row in rows))

    def __len__(self) -> int:
        return len(self.rows)

    @cached_property
    def columns(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """Column view: vocab id -> (positions, scores), positions ascending."""
        pos: dict[int, list[int]] = {}
        val: dict[int, list[float]] = {}
        for r, row in enumerate(self.rows):
            for v, w in row.items():
                pos.setdefault(v, []).append(r)
                val.setdefault(v, []).append(w)
        return {
            v: (np.asarray(pos[v], dtype=np.int64), np.asarray(val[v], dtype=np.float64))
            for v in pos
        }

    def column(self, term_id: int) -> np.ndarray:
        """Dense length-|rows| column of scores for one vocab id."""
        out = np.zeros(len(self.rows))
        hit = self.columns.get(term_id)
        if hit is not None:
            out[hit[0]] = hit[1]
        return out


@dataclass(frozen=True)
class Segment:
    doc_id: str
    seg_index: int
    tokens: tuple[int, ...]
    rep: SparseVector
    logits: TranslationMatrix | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if self.seg_index < 0:
            raise ValueError("seg_index must be >= 0")
        if self.logits is not None and len(self.logits) != len(self.tokens):
            raise CorruptSegmentError(
                f"segment {self.doc_id}#{self.seg_index}: {len(self.logits)} logit rows "
                f"for {len(self.tokens)} tokens"
            )

    @cached_property
    def exact_logits(self) -> TranslationMatrix:
        """Logits restricted to self-translation, cached per segment."""
        if self.logits is None:
            raise ValueError(f"segment {self.doc_id}#{self.seg_index} has no logits")
        return diagonal_mask(self.logits, self.tokens)


@dataclass(frozen=True)
class Document:
    doc_id: str
    segments: tuple[Segment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError(f"document {self.doc_id} has no segments")
        for i, seg in enumerate(self.segments):
            if seg.seg_index != i:
                raise ValueError(
                    f"document {self.doc_id}: segment indices must be 0..n-1, got {seg.seg_index} at {i}"
                )

    def __len__(self) -> int:
        return len(self.segments)


@dataclass(frozen=True)
class Query:
    """Ordered weighted query terms; order matters for n-gram potentials."""

    qid: str
    terms: tuple[tuple[int, float], ...] = field(default=())

    def __post_init__(self):
        terms = tuple((int(t), _check_weight(w)) for t, w in self.terms)
        object.__setattr__(self, "terms", terms)

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(t for t, _ in self.terms)

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(w for _, w in self.terms)

    @cached_property
    def rep(self) -> SparseVector:
        return SparseVector.from_pairs(self.terms)


def segment_document(
    tokens: Sequence[int], max_seg_len: int = DEFAULT_MAX_SEG_LEN, doc_id: str = ""
) -> list[Segment]:
    """Cut tokens into contiguous non-overlapping chunks of at most ``max_seg_len``.

    Segments carry a bag-of-words rep (term counts) as a placeholder; callers
    with encoder output replace it. An empty token list yields one empty segment.
    """
    if max_seg_len < 1:
        raise ValueError("max_seg_len must be >= 1")
    tokens = tuple(int(t) for t in tokens)
    chunks = [tokens[i:i + max_seg_len] for i in range(0, len(tokens), max_seg_len)] or [()]
    return [
        Segment(doc_id, i, chunk, SparseVector.from_pairs((t, 1.0) for t in chunk))
        for i, chunk in enumerate(chunks)
    ]


def diagonal_mask(W: TranslationMatrix, tokens: Sequence[int]) -> TranslationMatrix:
    """Keep only each position's self-translation entry W[r][tokens[r]]."""
    if len(W) != len(tokens):
        raise CorruptSegmentError(f"{len(W)} logit rows for {len(tokens)} tokens")
    rows = []
    for row, tok in zip(W.rows, tokens):
        w = row.get(tok, 0.0)
        rows.append({tok: w} if w > 0.0 else {})
    return TranslationMatrix(tuple(rows))


def rep_from_logits(W: TranslationMatrix) -> SparseVector:
    """Per-vocab max over positions."""
    best: dict[int, float] = {}
    for row in W.rows:
        for v, w in row.items():
            if w > best.get(v, 0.0):
                best[v] = w
    return SparseVector.from_dict(best)
