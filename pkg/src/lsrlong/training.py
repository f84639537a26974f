"""Fitting the three SDM combination weights with frozen representations.

The SDM score is linear in the lambdas, so each query-document pair reduces
to a fixed feature triple and training is logistic pairwise regression on
triple differences.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import Document, Query
from .sdm import Lambdas, SdmConfig, sdm_features

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FeatureTriple:
    psi_st: float
    psi_so: float
    psi_su: float

    def as_array(self) -> np.ndarray:
        return np.array([self.psi_st, self.psi_so, self.psi_su], dtype=np.float64)


@dataclass(frozen=True)
class TrainExample:
    qid: str
    pos: FeatureTriple
    neg: FeatureTriple


def compute_features(q: Query, doc: Document, cfg: SdmConfig) -> FeatureTriple:
    return FeatureTriple(*sdm_features(q, doc, cfg))


def _diffs(batch: Sequence[TrainExample]) -> np.ndarray:
    return np.array([e.pos.as_array() - e.neg.as_array() for e in batch]).reshape(-1, 3)


def _loss_grad(lam: np.ndarray, diffs: np.ndarray) -> tuple[float, np.ndarray]:
    margin = diffs @ lam
    loss = float(np.mean(np.logaddexp(0.0, -margin)))
    # d/dm log(1 + e^-m) = -sigmoid(-m)
    coef = -np.exp(-np.logaddexp(0.0, margin))
    grad = (coef[:, None] * diffs).mean(axis=0)
    return loss, grad


def pairwise_loss_grad(lam: Lambdas, batch: Sequence[TrainExample]) -> tuple[float, np.ndarray]:
    """Mean logistic pairwise loss and its analytic gradient w.r.t. the lambdas."""
    if not batch:
        raise ValueError("batch must not be empty")
    return _loss_grad(lam.as_array(), _diffs(batch))


def pairwise_accuracy(lam: Lambdas, examples: Sequence[TrainExample]) -> float:
    if not examples:
        return 0.0
    return float(np.mean(_diffs(examples) @ lam.as_array() > 0))


def fit_lambdas(
    examples: Sequence[TrainExample],
    init: Lambdas = Lambdas(),
    lr: float = 0.01,
    epochs: int = 200,
    seed: int = 0,
    nonneg: bool = False,
    batch_size: int | None = None,
    history: list | None = None,
) -> Lambdas:
    """Gradient descent on the pairwise loss.

    Full-batch by default; with ``batch_size`` the examples are shuffled
    each epoch by a generator seeded from ``seed``. ``history`` receives
    (epoch, loss) rows, epoch 0 being the initial loss.
    """
    if not examples:
        raise ValueError("need at least one training example")
    diffs = _diffs(examples)
    lam = init.as_array()
    rng = np.random.default_rng(seed)
    loss, _ = _loss_grad(lam, diffs)
    if history is not None:
        history.append((0, loss))
    for epoch in range(1, epochs + 1):
        if batch_size is None:
            _, grad = _loss_grad(lam, diffs)
            lam = lam - lr * grad
        else:
            order = rng.permutation(len(diffs))
            for start in range(0, len(order), batch_size):
                _, grad = _loss_grad(lam, diffs[order[start:start + batch_size]])
                lam = lam - lr * grad
        if nonneg:
            lam = np.maximum(lam, 0.0)
        loss, _ = _loss_grad(lam, diffs)
        if not np.isfinite(loss) or not np.all(np.isfinite(lam)):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}: loss={loss}, lambdas={lam}")
        if history is not None:
            history.append((epoch, loss))
        log.debug("epoch %d loss %.6f", epoch, loss)
    return Lambdas.from_array(lam)


def build_examples(
    queries: Mapping[str, Query],
    docs: Mapping[str, Document],
    candidates: Mapping[str, Sequence[tuple[str, float]]],
    qrels: Mapping[str, Mapping[str, int]],
    cfg: SdmConfig,
    negatives_per_positive: int = 4,
    seed: int = 0,
    rel_threshold: int = 1,
) -> list[TrainExample]:
    """Pair each judged-relevant document with negatives drawn from the query's candidates."""
    rng = np.random.default_rng(seed)
    examples = []
    for qid, ranking in candidates.items():
        q = queries.get(qid)
        judged = qrels.get(qid, {})
        if q is None:
            continue
        positives = [d for d, g in judged.items() if g >= rel_threshold and d in docs]
        pool = [d for d, _ in ranking if judged.get(d, 0) < rel_threshold and d in docs]
        if not positives or not pool:
            continue
        cache: dict[str, FeatureTriple] = {}

        def feats(doc_id):
            if doc_id not in cache:
                cache[doc_id] = compute_features(q, docs[doc_id], cfg)
            return cache[doc_id]

        for p in positives:
            take = min(negatives_per_positive, len(pool))
            for i in rng.choice(len(pool), size=take, replace=False):
                examples.append(TrainExample(qid, feats(p), feats(pool[i])))
    return examples


def write_training_log(history, path, header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        if header:
            f.write(f"# {header}\n")
        w = csv.writer(f)
        w.writerow(["epoch", "loss"])
        for epoch, loss in history:
            w.writerow([epoch, f"{loss:.12g}"])
