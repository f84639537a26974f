"""Command-line entry point: ``lsrlong <subcommand> [flags]``.

Settings resolve as built-in defaults < ``--config`` JSON < explicit flags.
Every output carries the hash of the resolved scoring settings (paths,
thread count and --force excluded), so equal settings give byte-identical
files regardless of where they are written or how many threads ran.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import analysis, io, synthetic
from .bm25 import Bm25Params
from .core import DEFAULT_MAX_SEG_LEN, Vocabulary
from .evaluation import evaluate, read_qrels, read_run, save_metrics, write_qrels, write_run
from .index import InvertedIndex, META_FILE, VOCAB_FILE
from .pipeline import RerankSettings, candidate_pairs, rerank, retrieve
from .sdm import Lambdas, SdmConfig
from .training import build_examples, fit_lambdas, pairwise_accuracy, write_training_log

log = logging.getLogger("lsrlong")

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "num_segments": 1,
    "agg": "score-max",
    "scorer": "agg",
    "variant": "exact",
    "n": 2,
    "prx": 8,
    "per_segment_windows": False,
    "lambda_st": 1.0,
    "lambda_so": 1.0,
    "lambda_su": 1.0,
    "run_tag": "lsrlong",
    "topk_segments": 10_000,
    "depth": 200,
    "max_seg_len": DEFAULT_MAX_SEG_LEN,
    "k1": 0.9,
    "b": 0.4,
    "sdm_weights": [0.85, 0.1, 0.05],
    "window": 8,
    "rm3_fb_docs": 10,
    "rm3_fb_terms": 10,
    "rm3_alpha": 0.5,
    "lr": 0.01,
    "epochs": 200,
    "nonneg": False,
    "negatives": 4,
    "rel_threshold": 1,
    "exp_gain": False,
    "seg_threshold": 2,
    "compare_segs": "1;1,2;1,2,3;1,2,3,5",
}
PATH_KEYS = {"corpus", "queries", "qrels", "index", "candidates", "run", "out", "out_dir", "log", "config"}
RUNTIME_KEYS = {"threads", "force", "plot", "command", "verbose"}


class CliError(Exception):
    pass


def resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        p = Path(args.config)
        if not p.exists():
            raise CliError(f"missing config file: {p}")
        loaded = json.loads(p.read_text(encoding="utf-8"))
        cfg.update({k: v for k, v in loaded.items() if k != "config_hash"})
    for k, v in vars(args).items():
        if v is not None:
            cfg[k] = v
    return cfg


def settings_hash(cfg: dict) -> str:
    return io.config_hash({k: v for k, v in cfg.items() if k not in PATH_KEYS | RUNTIME_KEYS})


def header(cfg: dict) -> str:
    return f"lsrlong {cfg['command']} config_hash={settings_hash(cfg)}"


def need(cfg: dict, key: str, what: str, hint: str = "") -> Path:
    value = cfg.get(key)
    if not value:
        raise CliError(f"--{key.replace('_', '-')} is required ({what})")
    p = Path(value)
    if not p.exists():
        raise CliError(f"missing {what}: {p}" + (f"; {hint}" if hint else ""))
    return p


def out_path(cfg: dict, key: str = "out") -> Path:
    value = cfg.get(key)
    if not value:
        raise CliError(f"--{key.replace('_', '-')} is required")
    p = Path(value)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def sdm_config(cfg: dict) -> SdmConfig:
    return SdmConfig(
        n=int(cfg["n"]),
        prx=int(cfg["prx"]),
        variant=cfg["variant"],
        num_segments=int(cfg["num_segments"]),
        per_segment_windows=bool(cfg["per_segment_windows"]),
    )


def lambdas(cfg: dict) -> Lambdas:
    return Lambdas(float(cfg["lambda_st"]), float(cfg["lambda_so"]), float(cfg["lambda_su"]))


def bm25_params(cfg: dict) -> Bm25Params:
    return Bm25Params(float(cfg["k1"]), float(cfg["b"]), tuple(float(x) for x in cfg["sdm_weights"]), int(cfg["window"]))


def load_corpus(cfg: dict):
    path = need(cfg, "corpus", "corpus JSONL")
    return io.read_corpus(path, max_seg_len=int(cfg["max_seg_len"]))


# -- subcommands ------------------------------------------------------------


def cmd_index(cfg: dict) -> dict:
    corpus = need(cfg, "corpus", "corpus JSONL")
    out = Path(cfg["index"]) if cfg.get("index") else None
    if out is None:
        raise CliError("--index is required (output directory)")
    if out.exists() and any(out.iterdir()) and not cfg.get("force"):
        raise CliError(f"index directory {out} is not empty; pass --force to overwrite")
    docs, vocab = io.read_corpus(corpus, max_seg_len=int(cfg["max_seg_len"]))
    idx = InvertedIndex.build((seg for d in docs.values() for seg in d.segments), len(vocab))
    report = {
        "documents": len(docs),
        "segments": len(idx),
        "terms": len(idx.postings),
        "postings": idx.num_postings,
    }
    idx.save(out, {"config_hash": settings_hash(cfg), "documents": len(docs)})
    vocab.save(out / VOCAB_FILE)
    return report


def cmd_retrieve(cfg: dict) -> dict:
    idx_dir = need(cfg, "index", "index directory", "run `lsrlong index` first")
    if not (idx_dir / META_FILE).exists():
        raise CliError(f"missing index at {idx_dir}; run `lsrlong index` first")
    idx = InvertedIndex.load(idx_dir)
    vocab = Vocabulary.load(idx_dir / VOCAB_FILE)
    queries = io.read_queries(need(cfg, "queries", "queries JSONL"), vocab)
    run = retrieve(idx, queries, int(cfg["topk_segments"]), int(cfg["depth"]), int(cfg["threads"]))
    out = out_path(cfg)
    write_run(run, out, cfg["run_tag"], header(cfg))
    return {"queries": len(run), "candidates": sum(len(r) for r in run.values()), "out": str(out)}


def _rerank_settings(cfg: dict) -> RerankSettings:
    return RerankSettings(
        scorer=cfg["scorer"],
        agg=cfg["agg"],
        num_segments=int(cfg["num_segments"]),
        sdm=sdm_config(cfg),
        lambdas=lambdas(cfg),
        bm25=bm25_params(cfg),
        rm3_fb_docs=int(cfg["rm3_fb_docs"]),
        rm3_fb_terms=int(cfg["rm3_fb_terms"]),
        rm3_alpha=float(cfg["rm3_alpha"]),
    )


def cmd_rerank(cfg: dict) -> dict:
    cand_path = need(cfg, "candidates", "candidate run file", "run `lsrlong retrieve` first")
    docs, vocab = load_corpus(cfg)
    queries = io.read_queries(need(cfg, "queries", "queries JSONL"), vocab)
    candidates = read_run(cand_path)
    try:
        run = rerank(queries, docs, candidates, _rerank_settings(cfg), int(cfg["threads"]))
    except KeyError as e:
        raise CliError(str(e.args[0])) from None
    out = out_path(cfg)
    write_run(run, out, cfg["run_tag"], header(cfg))
    return {"queries": len(run), "out": str(out)}


def cmd_train(cfg: dict) -> dict:
    cand_path = need(cfg, "candidates", "candidate run file", "run `lsrlong retrieve` first")
    qrels = read_qrels(need(cfg, "qrels", "qrels file"))
    docs, vocab = load_corpus(cfg)
    queries = io.read_queries(need(cfg, "queries", "queries JSONL"), vocab)
    candidates = read_run(cand_path)
    examples = build_examples(
        queries, docs, candidates, qrels, sdm_config(cfg), int(cfg["negatives"]), int(cfg["seed"]), int(cfg["rel_threshold"])
    )
    if not examples:
        raise CliError("no training pairs: candidates contain no judged-relevant/negative pairs")
    history: list = []
    lam = fit_lambdas(
        examples, lambdas(cfg), float(cfg["lr"]), int(cfg["epochs"]), int(cfg["seed"]), bool(cfg["nonneg"]), history=history
    )
    trained = {k: v for k, v in cfg.items() if k not in PATH_KEYS | RUNTIME_KEYS}
    trained.update(lambda_st=lam.lambda_st, lambda_so=lam.lambda_so, lambda_su=lam.lambda_su)
    trained["config_hash"] = settings_hash(cfg)
    out = out_path(cfg)
    out.write_text(json.dumps(trained, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if cfg.get("log"):
        write_training_log(history, out_path(cfg, "log"), header(cfg))
    return {
        "pairs": len(examples),
        "lambdas": [lam.lambda_st, lam.lambda_so, lam.lambda_su],
        "final_loss": history[-1][1],
        "pairwise_accuracy": pairwise_accuracy(lam, examples),
        "out": str(out),
    }


def cmd_evaluate(cfg: dict) -> dict:
    run = read_run(need(cfg, "run", "run file"))
    qrels = read_qrels(need(cfg, "qrels", "qrels file"))
    metrics = evaluate(run, qrels, int(cfg["rel_threshold"]), bool(cfg["exp_gain"]))
    if cfg.get("out"):
        save_metrics(metrics, out_path(cfg), header(cfg))
    return metrics


def _compare_sets(spec: str) -> list[list[int]]:
    try:
        return [[int(x) for x in part.split(",")] for part in spec.split(";") if part.strip()]
    except ValueError:
        raise CliError(f"bad --compare-segs {spec!r}; expected e.g. '1;1,2;1,2,3'") from None


def cmd_analyze(cfg: dict) -> dict:
    cand_path = need(cfg, "candidates", "candidate run file", "run `lsrlong retrieve` first")
    docs, vocab = load_corpus(cfg)
    queries = io.read_queries(need(cfg, "queries", "queries JSONL"), vocab)
    candidates = read_run(cand_path)
    qrels = read_qrels(need(cfg, "qrels", "qrels file")) if cfg.get("qrels") else None
    out_dir = Path(cfg.get("out_dir") or "")
    if not cfg.get("out_dir"):
        raise CliError("--out-dir is required")
    h = header(cfg)
    pairs = candidate_pairs(candidates)

    hists = {"all": analysis.top_segment_histogram(queries, docs, pairs)}
    if qrels is not None:
        rel_pairs = [(q, d) for q, judged in qrels.items() for d, g in judged.items() if g >= int(cfg["rel_threshold"])]
        hists["relevant"] = analysis.top_segment_histogram(queries, docs, rel_pairs, True, qrels, int(cfg["rel_threshold"]))
    for name, hist in hists.items():
        io.write_csv([{"seg_index": k, "count": v} for k, v in hist.items()], out_dir / f"top_segment_{name}.csv", h)

    sets = _compare_sets(cfg["compare_segs"])
    cat_rows, infl_rows = [], []
    for compare in sets:
        label = "+".join(str(j) for j in compare)
        need_len = max(compare) + 1
        cats = {}
        for doc_id in sorted({d for _, d in pairs}):
            doc = docs[doc_id]
            if len(doc) < need_len:
                continue
            cats[doc_id] = analysis.categorize_terms(doc, compare)
            row = {"compare": label, "doc_id": doc_id, "first_segment_terms": len(doc.segments[0].rep)}
            row.update(analysis.category_fractions(doc, cats[doc_id]))
            cat_rows.append(row)
        for qid, doc_id in pairs:
            if doc_id not in cats:
                continue
            try:
                u, i, g = analysis.term_influence(queries[qid], docs[doc_id], cats[doc_id])
            except ValueError:
                continue
            infl_rows.append(
                {"compare": label, "qid": qid, "doc_id": doc_id, "unique": u, "intersection": i, "global": g, "residue": 1.0 - (u + i + g)}
            )
    io.write_csv(cat_rows, out_dir / "term_categories.csv", h)
    io.write_csv(infl_rows, out_dir / "term_influence.csv", h)

    summary = []
    for compare in sets:
        label = "+".join(str(j) for j in compare)
        rows = [r for r in infl_rows if r["compare"] == label]
        crow = [r for r in cat_rows if r["compare"] == label]
        s = {"compare": label, "docs": len(crow), "pairs": len(rows)}
        for key in ("unique", "global"):
            s[f"mean_{key}_fraction"] = sum(r[key] for r in crow) / len(crow) if crow else ""
        for key in ("unique", "intersection", "global"):
            s[f"mean_{key}_influence"] = sum(r[key] for r in rows) / len(rows) if rows else ""
        summary.append(s)
    io.write_csv(summary, out_dir / "term_summary.csv", h)

    if cfg.get("plot"):
        _plot(hists, summary, out_dir)
    return {"pairs": len(pairs), "histograms": {k: sum(v.values()) for k, v in hists.items()}, "out_dir": str(out_dir)}


def _plot(hists, summary, out_dir: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, len(hists), figsize=(5 * len(hists), 3.5), squeeze=False)
    for ax, (name, hist) in zip(axes[0], hists.items()):
        ax.bar([k + 1 for k in hist], list(hist.values()))
        ax.set_xlabel("highest-scoring segment")
        ax.set_ylabel("pairs")
        ax.set_title(name)
    fig.tight_layout()
    fig.savefig(out_dir / "top_segment.png", dpi=120)
    plt.close(fig)

    rows = [s for s in summary if s["pairs"]]
    if rows:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        width = 0.25
        for i, key in enumerate(("unique", "intersection", "global")):
            ax.bar([x + i * width for x in range(len(rows))], [r[f"mean_{key}_influence"] for r in rows], width, label=key)
        ax.set_xticks([x + width for x in range(len(rows))], [r["compare"] for r in rows])
        ax.set_xlabel("compared segments (0-based)")
        ax.set_ylabel("share of first-segment score")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_dir / "term_influence.png", dpi=120)
        plt.close(fig)


def cmd_split(cfg: dict) -> dict:
    cand_path = need(cfg, "candidates", "candidate run file", "run `lsrlong retrieve` first")
    qrels = read_qrels(need(cfg, "qrels", "qrels file"))
    docs, _ = load_corpus(cfg)
    if not cfg.get("out_dir"):
        raise CliError("--out-dir is required")
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    candidates = read_run(cand_path)
    try:
        split = analysis.split_by_length(qrels, docs, candidates, int(cfg["seg_threshold"]), int(cfg["rel_threshold"]))
    except KeyError as e:
        raise CliError(str(e.args[0])) from None
    h = header(cfg)
    for side, qids, cands in (("short", split.short_qids, split.short_candidates), ("long", split.long_qids, split.long_candidates)):
        (out_dir / f"{side}_qids.txt").write_text(f"# {h}\n" + "".join(f"{q}\n" for q in sorted(qids)), encoding="utf-8")
        write_run({q: cands[q] for q in candidates if q in cands}, out_dir / f"{side}.run", cfg["run_tag"], h)
    stats = analysis.split_statistics(split, docs)
    io.write_csv(stats, out_dir / "split_stats.csv", h)
    return {"short_queries": len(split.short_qids), "long_queries": len(split.long_qids), "out_dir": str(out_dir)}


def cmd_synth(cfg: dict) -> dict:
    if not cfg.get("out_dir"):
        raise CliError("--out-dir is required")
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    coll = synthetic.generate(
        num_docs=int(cfg.get("num_docs") or 1000),
        num_queries=int(cfg.get("num_queries") or 50),
        num_train_queries=int(cfg.get("num_train_queries") or 50),
        seg_len=int(cfg.get("seg_len") or 64),
        seed=int(cfg["seed"]),
    )
    io.write_corpus(coll.docs.values(), coll.vocab, out_dir / "corpus.jsonl")
    io.write_queries(coll.queries.values(), coll.vocab, out_dir / "queries.jsonl")
    io.write_queries(coll.train_queries.values(), coll.vocab, out_dir / "train_queries.jsonl")
    write_qrels(coll.qrels, out_dir / "qrels.txt")
    return {"documents": len(coll.docs), "queries": len(coll.queries), "train_queries": len(coll.train_queries), "out_dir": str(out_dir)}


COMMANDS = {
    "index": cmd_index,
    "retrieve": cmd_retrieve,
    "rerank": cmd_rerank,
    "train-lambdas": cmd_train,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
    "split": cmd_split,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    g = shared.add_argument_group("shared")
    g.add_argument("--config", help="JSON run-config; explicit flags override it")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int)
    g.add_argument("--segs", dest="num_segments", type=int, help="use the first K segments of each document")
    g.add_argument("--agg", choices=["score-max", "rep-max", "rep-sum", "rep-mean"])
    g.add_argument("--variant", choices=["exact", "soft"])
    g.add_argument("--n", type=int, help="n-gram size for ordered matching")
    g.add_argument("--prx", type=int, help="proximity window width")
    g.add_argument("--run-tag")
    g.add_argument("--force", action="store_true", default=None)
    g.add_argument("--max-seg-len", type=int)
    g.add_argument("-v", "--verbose", action="store_true", default=None)

    p = argparse.ArgumentParser(prog="lsrlong", description="Learned sparse retrieval for long documents.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("index", parents=[shared], help="build an inverted index over segment reps")
    s.add_argument("--corpus")
    s.add_argument("--index")

    s = sub.add_parser("retrieve", parents=[shared], help="top-K segments -> document candidates")
    s.add_argument("--index")
    s.add_argument("--queries")
    s.add_argument("--out")
    s.add_argument("--topk-segments", type=int)
    s.add_argument("--depth", type=int)

    s = sub.add_parser("rerank", parents=[shared], help="re-score candidate lists")
    s.add_argument("--corpus")
    s.add_argument("--queries")
    s.add_argument("--candidates")
    s.add_argument("--out")
    s.add_argument("--scorer", choices=["agg", "sdm", "bm25", "bm25-sdm", "bm25-rm3"])
    s.add_argument("--per-segment-windows", action="store_true", default=None)
    s.add_argument("--lambda-st", type=float)
    s.add_argument("--lambda-so", type=float)
    s.add_argument("--lambda-su", type=float)
    s.add_argument("--k1", type=float)
    s.add_argument("--b", type=float)
    s.add_argument("--sdm-weights", type=float, nargs=3)
    s.add_argument("--window", type=int)
    s.add_argument("--rm3-fb-docs", type=int)
    s.add_argument("--rm3-fb-terms", type=int)
    s.add_argument("--rm3-alpha", type=float)

    s = sub.add_parser("train-lambdas", parents=[shared], help="fit SDM lambdas on candidate pairs")
    s.add_argument("--corpus")
    s.add_argument("--queries")
    s.add_argument("--qrels")
    s.add_argument("--candidates")
    s.add_argument("--out", help="run-config JSON to write")
    s.add_argument("--log", help="training log CSV (epoch, loss)")
    s.add_argument("--lr", type=float)
    s.add_argument("--epochs", type=int)
    s.add_argument("--negatives", type=int)
    s.add_argument("--nonneg", action="store_true", default=None)
    s.add_argument("--per-segment-windows", action="store_true", default=None)

    s = sub.add_parser("evaluate", parents=[shared], help="MRR@10, nDCG@10, Recall@200")
    s.add_argument("--run")
    s.add_argument("--qrels")
    s.add_argument("--out")
    s.add_argument("--exp-gain", action="store_true", default=None)
    s.add_argument("--rel-threshold", type=int)

    s = sub.add_parser("analyze", parents=[shared], help="segment and term diagnostics")
    s.add_argument("--corpus")
    s.add_argument("--queries")
    s.add_argument("--candidates")
    s.add_argument("--qrels")
    s.add_argument("--out-dir")
    s.add_argument("--compare-segs", help="0-based segment sets, e.g. '1;1,2;1,2,3;1,2,3,5'")
    s.add_argument("--rel-threshold", type=int)
    s.add_argument("--plot", action="store_true", default=None)

    s = sub.add_parser("split", parents=[shared], help="split queries by relevant-document length")
    s.add_argument("--corpus")
    s.add_argument("--qrels")
    s.add_argument("--candidates")
    s.add_argument("--out-dir")
    s.add_argument("--seg-threshold", type=int)
    s.add_argument("--rel-threshold", type=int)

    s = sub.add_parser("synth", parents=[shared], help="write a synthetic planted-phrase collection")
    s.add_argument("--out-dir")
    s.add_argument("--num-docs", type=int)
    s.add_argument("--num-queries", type=int)
    s.add_argument("--num-train-queries", type=int)
    s.add_argument("--seg-len", type=int)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        start = time.perf_counter()
        result = COMMANDS[args.command](cfg)
    except (CliError, io.CorpusFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    log.info("%s finished in %.2fs", args.command, time.perf_counter() - start)
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
