"""Seeded synthetic collections with planted phrase relevance.

Every query owns a handful of rare terms. Its relevant document carries
them as an adjacent, in-order run inside the first segment; its distractor
documents carry the same terms scattered at least ``gap`` positions apart,
so no proximity window of width < ``gap`` can cover two of them. Term
weights are drawn from the same distribution in both cases, which leaves
bag-of-words scorers guessing while phrase and proximity potentials see a
strictly positive margin for the relevant document.

The margin is guaranteed, not just likely: rare-term self weights lie in
[0.8, 1] and query weights in [0.5, 1.5], so the relevant document's
aligned run scores at least 0.8 * (w_max + w_min) while any single scattered
match scores at most w_max, and w_max < 4 * w_min.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Document, Query, Segment, TranslationMatrix, Vocabulary, rep_from_logits


@dataclass
class SyntheticCollection:
    vocab: Vocabulary
    docs: dict[str, Document]
    queries: dict[str, Query]
    train_queries: dict[str, Query]
    qrels: dict[str, dict[str, int]] = field(default_factory=dict)


def _round(x: float) -> float:
    # multiples of 1/1024 survive float32 index storage and JSON exactly
    return round(float(x) * 1024) / 1024



def generate(
    num_docs: int = 1000,
    num_queries: int = 50,
    num_train_queries: int = 50,
    distractors: int = 4,
    common_terms: int = 3000,
    terms_per_query: tuple[int, int] = (2, 3),
    seg_len: int = 64,
    max_segs: int = 5,
    expansions: int = 2,
    gap: int = 12,
    seed: int = 0,
) -> SyntheticCollection:
    rng = np.random.default_rng(seed)
    total_q = num_queries + num_train_queries
    if total_q * (1 + distractors) > num_docs:
        raise ValueError("num_docs too small for the planted queries")
    if gap * terms_per_query[1] > seg_len:
        raise ValueError("seg_len too short to scatter query terms")

    common = [f"w{i:04d}" for i in range(common_terms)]
    q_sizes = rng.integers(terms_per_query[0], terms_per_query[1] + 1, size=total_q)
    rare = [[f"q{qi:03d}t{j}" for j in range(k)] for qi, k in enumerate(q_sizes)]
    vocab = Vocabulary(common + [t for terms in rare for t in terms])
    common_ids = np.arange(common_terms)

    def filler(n):
        return [int(t) for t in rng.choice(common_ids, size=n)]

    def doc_tokens(n_segs):
        last = int(rng.integers(seg_len // 2, seg_len + 1))
        return [filler(seg_len) for _ in range(n_segs - 1)] + [filler(last)]

    def quantize(a):
        return np.round(a * 1024) / 1024  # same grid as _round

    def make_doc(doc_id, seg_tokens):
        segs = []
        for i, toks in enumerate(seg_tokens):
            arr = np.asarray(toks)
            self_w = quantize(rng.uniform(np.where(arr >= common_terms, 0.8, 0.3), 1.0))
            exp_ids = rng.choice(common_ids, size=(len(toks), expansions))
            exp_w = quantize(rng.uniform(0.05, 0.3, size=(len(toks), expansions)))
            rows = []
            for r, t in enumerate(toks):
                row = {t: float(self_w[r])}
                for e, w in zip(exp_ids[r].tolist(), exp_w[r].tolist()):
                    row.setdefault(e, w)
                rows.append(row)
            W = TranslationMatrix(tuple(rows))
            segs.append(Segment(doc_id, i, tuple(toks), rep_from_logits(W), W))
        return Document(doc_id, tuple(segs))

    docs: dict[str, Document] = {}
    queries: dict[str, Query] = {}
    train: dict[str, Query] = {}
    qrels: dict[str, dict[str, int]] = {}
    n_doc = 0

    def next_id():
        nonlocal n_doc
        n_doc += 1
        return f"D{n_doc - 1:05d}"

    for qi in range(total_q):
        qid = f"Q{qi:03d}" if qi < num_queries else f"T{qi - num_queries:03d}"
        ids = [vocab.lookup(t) for t in rare[qi]]
        q = Query(qid, tuple((t, _round(rng.uniform(0.5, 1.5))) for t in ids))
        (queries if qi < num_queries else train)[qid] = q
        k = len(ids)

        segs = doc_tokens(int(rng.integers(1, max_segs + 1)))
        start = int(rng.integers(0, len(segs[0]) - k + 1))
        segs[0][start:start + k] = ids
        rel_id = next_id()
        docs[rel_id] = make_doc(rel_id, segs)
        qrels[qid] = {rel_id: 1}

        for _ in range(distractors):
            segs = doc_tokens(int(rng.integers(1, max_segs + 1)))
            flat = [(s, p) for s, toks in enumerate(segs) for p in range(len(toks))]
            # slots spaced `gap` apart along the concatenated document, in shuffled term order
            room = len(flat) - gap * (k - 1)
            first = int(rng.integers(0, room))
            for t, slot in zip(rng.permutation(ids), range(first, first + gap * k, gap)):
                s, p = flat[slot]
                segs[s][p] = int(t)
            did = next_id()
            docs[did] = make_doc(did, segs)
            qrels[qid][did] = 0

    while n_doc < num_docs:
        did = next_id()
        docs[did] = make_doc(did, doc_tokens(int(rng.integers(1, max_segs + 1))))

    # shuffle so planted docs are not clustered at low ids
    order = [str(d) for d in rng.permutation(list(docs))]
    docs = {d: docs[d] for d in order}
    return SyntheticCollection(vocab, docs, queries, train, qrels)
