import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lsrlong.evaluation import (
    FormatError,
    evaluate,
    mrr_at_k,
    ndcg_at_k,
    rank_by_score,
    read_qrels,
    read_run,
    recall_at_k,
    write_qrels,
    write_run,
)

L = math.log2
# per-query closed forms from tests/data/README.md
FIXTURE_NDCG = [
    1.0,
    (1 / L(3) + 2 / L(5)) / (2 + 1 / L(3)),
    0.0,
    (1 / L(5)) / (1 + 1 / L(3)),
    3 / (3 + 1 / L(3)),
]


@pytest.fixture
def fixture(data_dir):
    return read_run(data_dir / "five_query.run"), read_qrels(data_dir / "five_query.qrels")


def test_fixture_values(fixture):
    run, qrels = fixture
    assert mrr_at_k(run, qrels, 10) == 0.55
    assert recall_at_k(run, qrels, 200) == 0.8
    assert ndcg_at_k(run, qrels, 10) == math.fsum(FIXTURE_NDCG) / 5


def test_fixture_cutoff(fixture):
    run, qrels = fixture
    # q3's relevant doc sits at rank 11
    assert recall_at_k(run, qrels, 10) == pytest.approx((1 + 1 + 0 + 0.5 + 0.5) / 5)


def test_single_relevant_at_rank_two():
    run = {"q": [("x", 2.0), ("r", 1.0)]}
    qrels = {"q": {"r": 1}}
    assert mrr_at_k(run, qrels) == 0.5
    assert ndcg_at_k(run, qrels) == pytest.approx(0.6309, abs=1e-4)
    assert ndcg_at_k(run, qrels) == 1 / L(3)


def test_exp_gain():
    run = {"q": [("a", 2.0), ("b", 1.0)]}
    qrels = {"q": {"a": 1, "b": 2}}
    lin = (1 + 2 / L(3)) / (2 + 1 / L(3))
    exp = (1 + 3 / L(3)) / (3 + 1 / L(3))
    assert ndcg_at_k(run, qrels) == pytest.approx(lin)
    assert ndcg_at_k(run, qrels, exp_gain=True) == pytest.approx(exp)


def test_query_handling():
    run = {"judged_none": [("a", 1.0)], "unjudged": [("a", 1.0)], "hit": [("a", 1.0)]}
    qrels = {"judged_none": {"a": 0}, "hit": {"a": 1}}
    # unjudged queries are excluded, judged-without-relevant ones score 0
    assert mrr_at_k(run, qrels) == 0.5
    assert ndcg_at_k(run, qrels) == 1.0
    assert recall_at_k(run, qrels) == 1.0
    assert evaluate(run, qrels)["num_queries"] == 2


def test_empty_run():
    assert evaluate({}, {})["mrr@10"] == 0.0


def test_rank_by_score_stable():
    assert rank_by_score([("a", 1.0), ("b", 2.0), ("c", 1.0), ("a", 0.5)]) == [("b", 2.0), ("a", 1.0), ("c", 1.0)]


def test_run_round_trip(tmp_path, fixture):
    run, qrels = fixture
    write_run(run, tmp_path / "r.run", tag="t", header="lsrlong test")
    assert (tmp_path / "r.run").read_text().startswith("# lsrlong test\n")
    assert read_run(tmp_path / "r.run") == run
    write_qrels(qrels, tmp_path / "q.txt")
    assert read_qrels(tmp_path / "q.txt") == qrels


def test_malformed_files(tmp_path):
    (tmp_path / "bad.run").write_text("q1 Q0 d1 1 1.0\n")
    with pytest.raises(FormatError, match=":1:"):
        read_run(tmp_path / "bad.run")
    (tmp_path / "bad.qrels").write_text("q1 0 d1 1\nq1 0 d2\n")
    with pytest.raises(FormatError, match=":2:"):
        read_qrels(tmp_path / "bad.qrels")


@given(st.integers(0, 2**31))
def test_metrics_bounded_and_order_free(seed):
    r = random.Random(seed)
    run, qrels = {}, {}
    for q in range(r.randint(1, 8)):
        docs = [f"d{i}" for i in r.sample(range(30), r.randint(0, 15))]
        run[f"q{q}"] = [(d, float(-i)) for i, d in enumerate(docs)]
        qrels[f"q{q}"] = {f"d{i}": r.randint(0, 3) for i in r.sample(range(30), r.randint(1, 5))}
    metrics = evaluate(run, qrels)
    items = list(run.items())
    r.shuffle(items)
    shuffled = evaluate(dict(items), qrels)
    for name in ("mrr@10", "ndcg@10", "recall@200"):
        assert 0.0 <= metrics[name] <= 1.0 + 1e-12
        assert metrics[name] == shuffled[name]


def test_perfect_ranking_scores_one():
    qrels = {"q": {"a": 3, "b": 2, "c": 1}}
    run = {"q": [("a", 3.0), ("b", 2.0), ("c", 1.0)]}
    assert evaluate(run, qrels) == {"mrr@10": 1.0, "ndcg@10": 1.0, "recall@200": 1.0, "num_queries": 1.0}
