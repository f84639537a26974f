"""Segment aggregation baselines: Score-Max and Rep-{max,sum,mean}.

All methods look only at the first ``k`` segments of a document.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import Document, SparseVector, dot

KINDS = ("score_max", "rep_max", "rep_sum", "rep_mean")


@dataclass(frozen=True)
class AggMethod:
    kind: str = "score_max"
    num_segments: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown aggregation {self.kind!r}; expected one of {KINDS}")
        if self.num_segments < 1:
            raise ValueError("num_segments must be >= 1")

    @classmethod
    def parse(cls, name: str, num_segments: int = 1) -> "AggMethod":
        """Accept CLI spellings such as ``score-max``."""
        return cls(name.replace("-", "_"), num_segments)


def score_max(q_rep: SparseVector, doc: Document, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return max(dot(q_rep, seg.rep) for seg in doc.segments[:k])


def rep_aggregate(doc: Document, k: int, mode: str) -> SparseVector:
    if k < 1:
        raise ValueError("k must be >= 1")
    segs = doc.segments[:k]
    if len(segs) == 1:
        return segs[0].rep
    acc: dict[int, float] = {}
    if mode == "max":
        for seg in segs:
            for t, w in seg.rep.items():
                if w > acc.get(t, 0.0):
                    acc[t] = w
    elif mode in ("sum", "mean"):
        for seg in segs:
            for t, w in seg.rep.items():
                acc[t] = acc.get(t, 0.0) + w
        if mode == "mean":
            # divide by the segments actually present, not by k
            acc = {t: w / len(segs) for t, w in acc.items()}
    else:
        raise ValueError(f"unknown rep aggregation mode {mode!r}")
    return SparseVector.from_dict(acc)


def aggregate_score(q_rep: SparseVector, doc: Document, method: AggMethod) -> float:
    if method.kind == "score_max":
        return score_max(q_rep, doc, method.num_segments)
    mode = method.kind.split("_", 1)[1]
    return dot(q_rep, rep_aggregate(doc, method.num_segments, mode))
