"""TREC run/qrels I/O and rank metrics (MRR@k, nDCG@k, Recall@k).

A run maps qid -> list of (doc_id, score) in rank order. Qrels map
qid -> {doc_id: grade}. Means are taken with ``math.fsum`` so the result
does not depend on query order.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Iterable, Mapping

log = logging.getLogger(__name__)

Run = dict[str, list[tuple[str, float]]]
Qrels = dict[str, dict[str, int]]


class FormatError(ValueError):
    pass


def _data_lines(path):
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if line and not line.startswith("#"):
                yield lineno, line.split()


def read_qrels(path) -> Qrels:
    qrels: Qrels = {}
    for lineno, parts in _data_lines(path):
        if len(parts) != 4:
            raise FormatError(f"{path}:{lineno}: expected 'qid 0 doc_id grade'")
        qid, _, doc_id, grade = parts
        g = int(grade)
        if g < 0:
            raise FormatError(f"{path}:{lineno}: negative grade")
        qrels.setdefault(qid, {})[doc_id] = g
    return qrels


def write_qrels(qrels: Mapping[str, Mapping[str, int]], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for qid, docs in qrels.items():
            for doc_id, g in docs.items():
                f.write(f"{qid} 0 {doc_id} {g}\n")


def read_run(path) -> Run:
    rows: dict[str, list[tuple[int, str, float]]] = {}
    for lineno, parts in _data_lines(path):
        if len(parts) != 6:
            raise FormatError(f"{path}:{lineno}: expected 'qid Q0 doc_id rank score tag'")
        qid, _, doc_id, rank, score, _tag = parts
        rows.setdefault(qid, []).append((int(rank), doc_id, float(score)))
    return {qid: [(d, s) for _, d, s in sorted(r)] for qid, r in rows.items()}


def format_run(run: Mapping[str, Iterable[tuple[str, float]]], tag: str = "lsrlong") -> str:
    lines = []
    for qid, ranking in run.items():
        for rank, (doc_id, score) in enumerate(ranking, 1):
            lines.append(f"{qid} Q0 {doc_id} {rank} {score:.6f} {tag}\n")
    return "".join(lines)


def write_run(run, path, tag: str = "lsrlong", header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        if header:
            f.write(f"# {header}\n")
        f.write(format_run(run, tag))


def rank_by_score(scored: Iterable[tuple[str, float]]) -> list[tuple[str, float]]:
    """Stable sort by score descending (ties keep input order), dropping duplicate doc_ids."""
    seen, out = set(), []
    for doc_id, s in sorted(scored, key=lambda x: -x[1]):
        if doc_id not in seen:
            seen.add(doc_id)
            out.append((doc_id, s))
    return out


def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values) if values else 0.0


def mrr_at_k(run: Run, qrels: Qrels, k: int = 10, rel_threshold: int = 1) -> float:
    values, skipped = [], 0
    for qid, ranking in run.items():
        judged = qrels.get(qid)
        if judged is None:
            skipped += 1
            continue
        rr = 0.0
        for rank, (doc_id, _) in enumerate(ranking[:k], 1):
            if judged.get(doc_id, 0) >= rel_threshold:
                rr = 1.0 / rank
                break
        values.append(rr)
    if skipped:
        log.warning("mrr: %d run queries without qrels were excluded", skipped)
    return _mean(values)


def _gain(grade: int, exp_gain: bool) -> float:
    return float(2**grade - 1) if exp_gain else float(grade)


def ndcg_at_k(run: Run, qrels: Qrels, k: int = 10, exp_gain: bool = False) -> float:
    values, skipped = [], 0
    for qid, ranking in run.items():
        judged = qrels.get(qid, {})
        ideal = sorted((g for g in judged.values() if g > 0), reverse=True)[:k]
        if not ideal:
            skipped += 1
            continue
        idcg = math.fsum(_gain(g, exp_gain) / math.log2(i + 1) for i, g in enumerate(ideal, 1))
        dcg = math.fsum(
            _gain(judged.get(doc_id, 0), exp_gain) / math.log2(i + 1)
            for i, (doc_id, _) in enumerate(ranking[:k], 1)
        )
        values.append(dcg / idcg)
    if skipped:
        log.warning("ndcg: %d run queries without relevant documents were excluded", skipped)
    return _mean(values)


def recall_at_k(run: Run, qrels: Qrels, k: int = 200, rel_threshold: int = 1) -> float:
    values, skipped = [], 0
    for qid, ranking in run.items():
        relevant = {d for d, g in qrels.get(qid, {}).items() if g >= rel_threshold}
        if not relevant:
            skipped += 1
            continue
        hit = sum(1 for doc_id, _ in ranking[:k] if doc_id in relevant)
        values.append(hit / len(relevant))
    if skipped:
        log.warning("recall: %d run queries without relevant documents were excluded", skipped)
    return _mean(values)


def evaluate(run: Run, qrels: Qrels, rel_threshold: int = 1, exp_gain: bool = False) -> dict[str, float]:
    return {
        "mrr@10": mrr_at_k(run, qrels, 10, rel_threshold),
        "ndcg@10": ndcg_at_k(run, qrels, 10, exp_gain),
        "recall@200": recall_at_k(run, qrels, 200, rel_threshold),
        "num_queries": float(sum(1 for q in run if q in qrels)),
    }


def save_metrics(metrics: Mapping[str, float], path, header: str | None = None) -> None:
    p = Path(path)
    with open(p, "w", encoding="utf-8") as f:
        if header:
            f.write(f"# {header}\n")
        f.write("metric\tvalue\n")
        for name, value in metrics.items():
            f.write(f"{name}\t{value:.6f}\n")
