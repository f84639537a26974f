"""JSON-lines ingestion of segment representations and queries.

Corpus lines::

    {"doc_id": "d1", "seg": 0, "tokens": ["cat", "sat"],
     "rep": {"cat": 0.8, "sat": 0.3},
     "logits": [{"cat": 0.8, "feline": 0.2}, {"sat": 0.3}]}

``rep`` may be omitted when ``logits`` is present; it is then the per-term
max over positions. ``text`` may replace ``tokens`` (lowercased and split
on whitespace). Query lines are ``{"qid": "q1", "terms": [["cat", 1.2], ...]}``
or ``{"qid": "q1", "text": "..."}`` with unit weights.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Mapping

from .core import (
    DEFAULT_MAX_SEG_LEN,
    Document,
    Query,
    Segment,
    SparseVector,
    TranslationMatrix,
    Vocabulary,
    rep_from_logits,
)


class CorpusFormatError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def _records(path):
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"{path}:{lineno}: malformed JSON ({e.msg})") from None
            if not isinstance(rec, dict):
                raise CorpusFormatError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, rec


def _tokens(rec) -> list[str]:
    if "tokens" in rec:
        return [str(t) for t in rec["tokens"]]
    if "text" in rec:
        return tokenize(rec["text"])
    raise KeyError("tokens")


def _record_terms(rec) -> Iterable[str]:
    yield from _tokens(rec)
    yield from rec.get("rep", {})
    for row in rec.get("logits") or []:
        yield from row


def corpus_terms(path) -> Iterable[str]:
    """Every term in the corpus in first-seen order (may repeat)."""
    for lineno, rec in _records(path):
        try:
            yield from _record_terms(rec)
        except (KeyError, TypeError, AttributeError) as e:
            raise CorpusFormatError(f"{path}:{lineno}: bad record ({e})") from None


def read_corpus(path, vocab: Vocabulary | None = None, max_seg_len: int = DEFAULT_MAX_SEG_LEN) -> tuple[dict[str, Document], Vocabulary]:
    """Load documents; builds the vocabulary from the corpus when none is given."""
    records = list(_records(path))
    if not records:
        raise CorpusFormatError(f"{path}: empty corpus")
    if vocab is None:
        def terms():
            for lineno, rec in records:
                try:
                    yield from _record_terms(rec)
                except (KeyError, TypeError, AttributeError) as e:
                    raise CorpusFormatError(f"{path}:{lineno}: bad record ({e})") from None

        try:
            vocab = Vocabulary(terms())
        except CorpusFormatError:
            raise
        except ValueError:
            raise CorpusFormatError(f"{path}: empty corpus") from None
    ids = vocab.term_to_id
    by_doc: dict[str, list[Segment]] = {}
    for lineno, rec in records:
        try:
            doc_id = str(rec["doc_id"])
            seg = int(rec["seg"])
            tokens = [_lookup(ids, t) for t in _tokens(rec)]
            if len(tokens) > max_seg_len:
                raise ValueError(f"segment has {len(tokens)} tokens, limit is {max_seg_len}")
            logits = None
            if rec.get("logits") is not None:
                logits = TranslationMatrix(
                    tuple({_lookup(ids, t): float(w) for t, w in row.items()} for row in rec["logits"])
                )
            if "rep" in rec:
                rep = SparseVector.from_dict({_lookup(ids, t): w for t, w in rec["rep"].items()})
            elif logits is not None:
                rep = rep_from_logits(logits) if len(logits) else SparseVector()
            else:
                raise ValueError("segment needs 'rep' or 'logits'")
            by_doc.setdefault(doc_id, []).append(Segment(doc_id, seg, tokens, rep, logits))
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise CorpusFormatError(f"{path}:{lineno}: {e}") from None
    docs = {}
    for doc_id, segs in by_doc.items():
        try:
            docs[doc_id] = Document(doc_id, tuple(sorted(segs, key=lambda s: s.seg_index)))
        except ValueError as e:
            raise CorpusFormatError(f"{path}: {e}") from None
    return docs, vocab


def _lookup(ids: Mapping[str, int], term: str) -> int:
    try:
        return ids[term]
    except KeyError:
        raise ValueError(f"term {term!r} not in vocabulary") from None


def read_queries(path, vocab: Vocabulary) -> dict[str, Query]:
    """Queries keyed by qid in file order; unknown terms map to the OOV id."""
    queries = {}
    for lineno, rec in _records(path):
        try:
            qid = str(rec["qid"])
            if "terms" in rec:
                terms = [(vocab.lookup(str(t)), float(w)) for t, w in rec["terms"]]
            else:
                terms = [(vocab.lookup(t), 1.0) for t in tokenize(rec["text"])]
            queries[qid] = Query(qid, tuple(terms))
        except (KeyError, TypeError, ValueError) as e:
            raise CorpusFormatError(f"{path}:{lineno}: {e}") from None
    return queries


def query_terms_as_strings(q: Query, vocab: Vocabulary) -> list[str]:
    return [vocab.term(t) for t in q.ids]


def write_corpus(docs: Iterable[Document], vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            for seg in doc.segments:
                rec = {
                    "doc_id": doc.doc_id,
                    "seg": seg.seg_index,
                    "tokens": [vocab.term(t) for t in seg.tokens],
                    "rep": {vocab.term(t): w for t, w in seg.rep.items()},
                }
                if seg.logits is not None:
                    rec["logits"] = [{vocab.term(v): w for v, w in row.items()} for row in seg.logits.rows]
                f.write(json.dumps(rec) + "\n")


def write_queries(queries: Iterable[Query], vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for q in queries:
            f.write(json.dumps({"qid": q.qid, "terms": [[vocab.term(t), w] for t, w in q.terms]}) + "\n")


def config_hash(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def write_csv(rows: list[Mapping], path, header: str | None = None) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fields: list[str] = []
    for row in rows:
        for k in row:
            if k not in fields:
                fields.append(k)
    with open(path, "w", encoding="utf-8", newline="") as f:
        if header:
            f.write(f"# {header}\n")
        w = csv.DictWriter(f, fieldnames=fields, restval="")
        w.writeheader()
        w.writerows(rows)
