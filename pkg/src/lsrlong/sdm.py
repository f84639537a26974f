"""Sequential dependence scoring over sparse translation logits.

Three potentials are computed from a query and a positional logit matrix:

* term matching: each query term's best translation score anywhere,
* ordered n-gram matching: best aligned run of ``n`` consecutive positions,
* unordered proximity matching: best window of ``prx`` positions in which
  every term of a query n-gram takes its own best score.

The exact variant masks the logits down to self-translation before scoring;
the soft variant keeps document expansion. The document score is the
lambda-weighted sum of the three potentials (the log-linear form, with the
partition function dropped since it does not change the ranking).
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import Document, Query, TranslationMatrix

log = logging.getLogger(__name__)

VARIANTS = ("exact", "soft")


@dataclass(frozen=True)
class Lambdas:
    lambda_st: float = 1.0
    lambda_so: float = 1.0
    lambda_su: float = 1.0

    def __post_init__(self):
        for v in (self.lambda_st, self.lambda_so, self.lambda_su):
            if not math.isfinite(v):
                raise ValueError(f"lambdas must be finite, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.lambda_st, self.lambda_so, self.lambda_su], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "Lambdas":
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class SdmConfig:
    n: int = 2
    prx: int = 8
    variant: str = "exact"
    num_segments: int = 1
    per_segment_windows: bool = False

    def __post_init__(self):
        if self.n < 1 or self.prx < 1 or self.num_segments < 1:
            raise ValueError(f"n, prx and num_segments must be >= 1, got {self}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.prx < self.n:
            log.warning("prx=%d is smaller than n=%d", self.prx, self.n)

    def to_dict(self) -> dict:
        return asdict(self)


class OracleScaleError(ValueError):
    """The brute-force oracle refuses inputs beyond its intended scale."""


# -- vectorised potentials over a column matrix ------------------------------
#
# ``cols`` has one row per query position and one column per document
# position: cols[i, r] = W[r][v_{q_i}]. ``blocks`` lists the (start, stop)
# position ranges windows may not cross.


def _term_match(cols: np.ndarray, w: np.ndarray) -> float:
    if cols.shape[1] == 0:
        return 0.0
    return math.fsum(w[i] * cols[i].max() for i in range(len(w)))


def _ordered_match(cols: np.ndarray, w: np.ndarray, n: int, blocks) -> float:
    m = len(w)
    if m < n:
        return 0.0
    total = []
    for i in range(m - n + 1):
        best = None
        for a, b in blocks:
            span = b - a - n + 1
            if span <= 0:
                continue
            s = w[i] * cols[i, a:a + span]
            for l in range(1, n):
                s = s + w[i + l] * cols[i + l, a + l:a + l + span]
            top = s.max()
            best = top if best is None else max(best, top)
        if best is not None:
            total.append(best)
    return math.fsum(total)


def _unordered_match(cols: np.ndarray, w: np.ndarray, n: int, prx: int, blocks) -> float:
    m = len(w)
    if m == 0:
        return 0.0
    g = min(n, m)  # a query shorter than n is one group
    per_block = []
    for a, b in blocks:
        if b <= a:
            continue
        width = min(prx, b - a)
        per_block.append(sliding_window_view(cols[:, a:b], width, axis=1).max(axis=-1))
    if not per_block:
        return 0.0
    total = []
    for i in range(m - g + 1):
        best = None
        for wm in per_block:
            s = w[i] * wm[i]
            for h in range(1, g):
                s = s + w[i + h] * wm[i + h]
            top = s.max()
            best = top if best is None else max(best, top)
        total.append(best)
    return math.fsum(total)


def _columns(q: Query, matrices) -> np.ndarray:
    ids = q.ids
    if not ids:
        return np.zeros((0, sum(len(W) for W in matrices)))
    per_id = {}
    for v in set(ids):
        per_id[v] = np.concatenate([W.column(v) for W in matrices]) if matrices else np.zeros(0)
    return np.vstack([per_id[v] for v in ids])


def _weights(q: Query) -> np.ndarray:
    return np.asarray(q.weights, dtype=np.float64)


def psi_st(q: Query, W: TranslationMatrix, lambda_st: float = 1.0) -> float:
    """Weighted sum over query terms of their best translation score."""
    if not q.terms:
        return 0.0
    return lambda_st * _term_match(_columns(q, [W]), _weights(q))


def psi_so(q: Query, W: TranslationMatrix, n: int, lambda_so: float = 1.0) -> float:
    """Ordered n-gram potential; every full window of ``n`` positions is a candidate."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not q.terms:
        return 0.0
    return lambda_so * _ordered_match(_columns(q, [W]), _weights(q), n, [(0, len(W))])


def psi_su(q: Query, W: TranslationMatrix, n: int, prx: int, lambda_su: float = 1.0) -> float:
    """Unordered proximity potential over windows of ``prx`` positions.

    A segment shorter than ``prx`` is scored as one window.
    """
    if prx < 1 or n < 1:
        raise ValueError("n and prx must be >= 1")
    if not q.terms:
        return 0.0
    return lambda_su * _unordered_match(_columns(q, [W]), _weights(q), n, prx, [(0, len(W))])


def document_matrices(doc: Document, cfg: SdmConfig) -> list[TranslationMatrix]:
    """Logit matrices of the first ``num_segments`` segments, masked for the exact variant."""
    out = []
    for seg in doc.segments[: cfg.num_segments]:
        if seg.logits is None:
            raise ValueError(f"segment {seg.doc_id}#{seg.seg_index} has no logits")
        out.append(seg.exact_logits if cfg.variant == "exact" else seg.logits)
    return out


def sdm_features(q: Query, doc: Document, cfg: SdmConfig) -> tuple[float, float, float]:
    """The three potentials with unit lambdas on the truncated document."""
    matrices = document_matrices(doc, cfg)
    if not q.terms:
        return (0.0, 0.0, 0.0)
    cols = _columns(q, matrices)
    w = _weights(q)
    if cfg.per_segment_windows:
        blocks, start = [], 0
        for W in matrices:
            blocks.append((start, start + len(W)))
            start += len(W)
    else:
        blocks = [(0, cols.shape[1])]
    return (
        _term_match(cols, w),
        _ordered_match(cols, w, cfg.n, blocks),
        _unordered_match(cols, w, cfg.n, cfg.prx, blocks),
    )


def sdm_score(q: Query, doc: Document, cfg: SdmConfig, lam: Lambdas = Lambdas()) -> float:
    st, so, su = sdm_features(q, doc, cfg)
    return lam.lambda_st * st + lam.lambda_so * so + lam.lambda_su * su


ORACLE_MAX_POSITIONS = 64
ORACLE_MAX_TERMS = 8


def brute_force_sdm(q: Query, doc: Document, cfg: SdmConfig, lam: Lambdas = Lambdas()) -> float:
    """Reference implementation by exhaustive enumeration in plain Python.

    Deliberately shares nothing with the vectorised path above: masking,
    concatenation and window enumeration are redone here loop by loop.
    """
    segs = doc.segments[: cfg.num_segments]
    rows, tokens, bounds = [], [], []
    for seg in segs:
        if seg.logits is None:
            raise ValueError(f"segment {seg.doc_id}#{seg.seg_index} has no logits")
        bounds.append((len(rows), len(rows) + len(seg.tokens)))
        rows.extend(seg.logits.rows)
        tokens.extend(seg.tokens)
    terms = list(q.terms)
    if len(rows) > ORACLE_MAX_POSITIONS or len(terms) > ORACLE_MAX_TERMS:
        raise OracleScaleError(
            f"oracle limited to {ORACLE_MAX_POSITIONS} positions and {ORACLE_MAX_TERMS} terms, "
            f"got {len(rows)} and {len(terms)}"
        )
    if not terms:
        return 0.0
    if not cfg.per_segment_windows:
        bounds = [(0, len(rows))]

    def score(r, v):
        if cfg.variant == "exact" and tokens[r] != v:
            return 0.0
        return rows[r].get(v, 0.0)

    L, m, n, prx = len(rows), len(terms), cfg.n, cfg.prx

    st = 0.0
    for v, wq in terms:
        best = 0.0
        for r in range(L):
            best = max(best, wq * score(r, v))
        st += best

    so = 0.0
    if m >= n:
        for i in range(m - n + 1):
            best = None
            for a, b in bounds:
                for r in range(a, b - n + 1):
                    s = 0.0
                    for l in range(n):
                        v, wq = terms[i + l]
                        s += wq * score(r + l, v)
                    if best is None or s > best:
                        best = s
            if best is not None:
                so += best

    su = 0.0
    g = min(n, m)
    for i in range(m - g + 1):
        best = None
        for a, b in bounds:
            if b <= a:
                continue
            width = min(prx, b - a)
            for r in range(a, b - width + 1):
                s = 0.0
                for h in range(i, i + g):
                    v, wq = terms[h]
                    s += wq * max(score(l, v) for l in range(r, r + width))
                if best is None or s > best:
                    best = s
        if best is not None:
            su += best

    return lam.lambda_st * st + lam.lambda_so * so + lam.lambda_su * su
