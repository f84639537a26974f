"""Inverted index over segment representations and first-stage retrieval.

Segments are numbered in build order (the *segment ref*). Each term keeps a
contiguous array of refs and a parallel array of weights. Retrieval is
exhaustive term-at-a-time accumulation, so scores are exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import Segment, SparseVector

FORMAT_VERSION = 1
_MAGIC = b"LSRP"

POSTINGS_FILE = "postings.bin"
SEG_TABLE_FILE = "seg_table.tsv"
META_FILE = "meta.json"
VOCAB_FILE = "vocab.txt"

DEFAULT_TOPK_SEGMENTS = 10_000
DEFAULT_CANDIDATE_DEPTH = 200


class InvertedIndex:
    def __init__(self, postings, seg_table, vocab_size=None):
        self.postings: dict[int, tuple[np.ndarray, np.ndarray]] = postings
        self.seg_table: list[tuple[str, int]] = seg_table
        self.vocab_size = vocab_size

    def __len__(self) -> int:
        return len(self.seg_table)

    @property
    def num_postings(self) -> int:
        return sum(len(refs) for refs, _ in self.postings.values())

    def df(self, term_id: int) -> int:
        hit = self.postings.get(term_id)
        return 0 if hit is None else len(hit[0])

    @classmethod
    def build(cls, segments: Iterable[Segment], vocab_size: int | None = None) -> "InvertedIndex":
        seen: set[tuple[str, int]] = set()
        seg_table: list[tuple[str, int]] = []
        refs: dict[int, list[int]] = {}
        weights: dict[int, list[float]] = {}
        for seg in segments:
            key = (seg.doc_id, seg.seg_index)
            if key in seen:
                raise ValueError(f"duplicate segment {seg.doc_id}#{seg.seg_index}")
            seen.add(key)
            ref = len(seg_table)
            seg_table.append(key)
            for t, w in seg.rep.items():
                if w < 0:
                    raise ValueError(f"negative weight in segment {seg.doc_id}#{seg.seg_index}")
                if w > 0:
                    refs.setdefault(t, []).append(ref)
                    weights.setdefault(t, []).append(w)
        postings = {
            t: (np.asarray(refs[t], dtype=np.int64), np.asarray(weights[t], dtype=np.float64))
            for t in sorted(refs)
        }
        return cls(postings, seg_table, vocab_size)

    def segment_rep(self, ref: int) -> SparseVector:
        """Rebuild one segment's rep from the postings (slow; for checks)."""
        acc = {}
        for t, (refs, ws) in self.postings.items():
            i = np.searchsorted(refs, ref)
            if i < len(refs) and refs[i] == ref:
                acc[t] = float(ws[i])
        return SparseVector.from_dict(acc)

    def retrieve(self, q_rep: SparseVector, k: int = DEFAULT_TOPK_SEGMENTS) -> list[tuple[int, float]]:
        return retrieve_topk_segments(self, q_rep, k)

    # -- persistence -------------------------------------------------------

    def save(self, directory, extra_meta: dict | None = None) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / POSTINGS_FILE, "wb") as f:
            f.write(_MAGIC)
            f.write(struct.pack("<II", FORMAT_VERSION, len(self.postings)))
            for t, (refs, ws) in self.postings.items():
                f.write(struct.pack("<II", t, len(refs)))
                f.write(np.diff(refs, prepend=0).astype("<u4").tobytes())
                f.write(ws.astype("<f4").tobytes())
        with open(d / SEG_TABLE_FILE, "w", encoding="utf-8") as f:
            for ref, (doc_id, seg_index) in enumerate(self.seg_table):
                f.write(f"{ref}\t{doc_id}\t{seg_index}\n")
        meta = {
            "format_version": FORMAT_VERSION,
            "vocab_size": self.vocab_size,
            "num_segments": len(self.seg_table),
            "num_terms": len(self.postings),
            "num_postings": self.num_postings,
        }
        meta.update(extra_meta or {})
        with open(d / META_FILE, "w", encoding="utf-8") as f:
            json.dump(meta, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, directory) -> "InvertedIndex":
        d = Path(directory)
        for name in (POSTINGS_FILE, SEG_TABLE_FILE, META_FILE):
            if not (d / name).exists():
                raise FileNotFoundError(f"index at {d} is missing {name}; run `lsrlong index` first")
        meta = json.loads((d / META_FILE).read_text(encoding="utf-8"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported index format {meta.get('format_version')}")
        buf = (d / POSTINGS_FILE).read_bytes()
        if buf[:4] != _MAGIC:
            raise ValueError(f"{d / POSTINGS_FILE} is not a postings file")
        _, num_terms = struct.unpack_from("<II", buf, 4)
        off = 12
        postings = {}
        for _ in range(num_terms):
            t, count = struct.unpack_from("<II", buf, off)
            off += 8
            deltas = np.frombuffer(buf, dtype="<u4", count=count, offset=off)
            off += 4 * count
            ws = np.frombuffer(buf, dtype="<f4", count=count, offset=off)
            off += 4 * count
            postings[t] = (np.cumsum(deltas, dtype=np.int64), ws.astype(np.float64))
        seg_table = []
        with open(d / SEG_TABLE_FILE, encoding="utf-8") as f:
            for line in f:
                _, doc_id, seg_index = line.rstrip("\n").split("\t")
                seg_table.append((doc_id, int(seg_index)))
        return cls(postings, seg_table, meta.get("vocab_size"))


def build_index(segments: Iterable[Segment], vocab_size: int | None = None) -> InvertedIndex:
    return InvertedIndex.build(segments, vocab_size)


def retrieve_topk_segments(idx: InvertedIndex, q_rep: SparseVector, K: int) -> list[tuple[int, float]]:
    """Top-K segments by dot product; ties go to the lower segment ref."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if len(idx) == 0:
        return []
    acc = np.zeros(len(idx))
    for t, w in q_rep.items():
        hit = idx.postings.get(t)
        if hit is not None:
            acc[hit[0]] += w * hit[1]
    cand = np.flatnonzero(acc > 0)
    if len(cand) > K:
        # keep everything tied with the K-th score so the tie rule decides
        kth = np.partition(acc[cand], len(cand) - K)[len(cand) - K]
        cand = cand[acc[cand] >= kth]
    order = np.lexsort((cand, -acc[cand]))[:K]
    return [(int(r), float(acc[r])) for r in cand[order]]


def segments_to_doc_candidates(ranked_segments: Iterable[tuple[str, int, float]], candidate_depth: int = DEFAULT_CANDIDATE_DEPTH) -> list[tuple[str, float]]:
    """Collapse a ranked segment stream into documents, keeping each doc's first (best) score."""
    out: list[tuple[str, float]] = []
    seen: set[str] = set()
    for doc_id, _seg, score in ranked_segments:
        if doc_id in seen:
            continue
        seen.add(doc_id)
        out.append((doc_id, score))
        if len(out) >= candidate_depth:
            break
    return out


def doc_candidates(idx: InvertedIndex, q_rep: SparseVector, K: int = DEFAULT_TOPK_SEGMENTS, depth: int = DEFAULT_CANDIDATE_DEPTH) -> list[tuple[str, float]]:
    ranked = retrieve_topk_segments(idx, q_rep, K)
    return segments_to_doc_candidates(((*idx.seg_table[r], s) for r, s in ranked), depth)
