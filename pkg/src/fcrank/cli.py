"""Operator entry point for the whole pipeline.

Values resolve in order: command-line flag, then FCRANK_* environment
variable (paths only), then the YAML config file, then the built-in
default.
"""

import json
import math
import os
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from . import bm25, evaluate, plots, stores, trainer
from .corpus import ScenarioConfig, ingest_corpus, write_corpus, write_qrels
from .model import (
    Hyperparams,
    ModelParams,
    interaction_tensors,
    load_checkpoint,
    save_checkpoint,
)

PATH_KEYS = ("queries", "docs", "qrels", "split_qrels", "store", "index",
             "candidates", "checkpoint", "report_dir", "leftover")


class Config:
    def __init__(self, data=None):
        self.data = data or {}

    @classmethod
    def load(cls, path):
        if path is None:
            return cls()
        with open(path, encoding="utf-8") as fh:
            return cls(yaml.safe_load(fh) or {})

    def path(self, key, flag_value):
        if flag_value is not None:
            return flag_value
        env = os.environ.get("FCRANK_" + key.upper())
        if env:
            return env
        value = (self.data.get("paths") or {}).get(key)
        if value is None:
            raise click.UsageError("no value for path %r (flag, FCRANK_%s or config)"
                                   % (key, key.upper()))
        return value

    def value(self, key, flag_value, default=None):
        if flag_value is not None:
            return flag_value
        if key in self.data:
            return self.data[key]
        if default is None:
            raise click.UsageError("no value for %r (flag or config)" % key)
        return default

    def section(self, key, cls, **overrides):
        fields = dict(self.data.get(key) or {})
        fields.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**fields)


def _load_corpus(cfg, queries, docs, qrels):
    return ingest_corpus(cfg.path("queries", queries), cfg.path("docs", docs),
                         cfg.path("qrels", qrels))


def _report_paths(cfg, report_dir, stem):
    out = Path(cfg.path("report_dir", report_dir))
    out.mkdir(parents=True, exist_ok=True)
    return out / (stem + ".tsv"), out / (stem + ".png")


config_option = click.option("--config", "config_path", type=click.Path(exists=True),
                             default=None, help="YAML config file.")
corpus_options = [
    click.option("--queries", default=None, help="Queries file."),
    click.option("--docs", default=None, help="Documents file."),
    click.option("--qrels", default=None, help="Qrels file."),
]


def add_options(opts):
    def wrap(fn):
        for opt in reversed(opts):
            fn = opt(fn)
        return fn
    return wrap


@click.group()
def main():
    """Two-stage fact-checking article retrieval."""


@main.command()
@config_option
@add_options(corpus_options)
@click.option("--out-dir", default=None, help="Write normalized corpus files here.")
def ingest(config_path, queries, docs, qrels, out_dir):
    """Validate the corpus files and report counts."""
    cfg = Config.load(config_path)
    corpus = _load_corpus(cfg, queries, docs, qrels)
    for warning in corpus.warnings:
        click.echo("warning: " + warning, err=True)
    counts = corpus.counts()
    click.echo("queries=%d docs=%d positive_pairs=%d"
               % (counts["queries"], counts["docs"], counts["positive_pairs"]))
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_corpus(corpus, out / "queries.tsv", out / "docs.tsv", out / "qrels.tsv")
        click.echo("normalized corpus written to %s" % out)


@main.command("synth-store")
@config_option
@add_options(corpus_options)
@click.option("--store", "store_path", default=None, help="Output store file.")
@click.option("--seed", type=int, default=None)
def synth_store(config_path, queries, docs, qrels, store_path, seed):
    """Generate a deterministic synthetic embedding store for the corpus."""
    cfg = Config.load(config_path)
    corpus = _load_corpus(cfg, queries, docs, qrels)
    seed = cfg.value("seed", seed, 0)
    store = stores.generate_synthetic(corpus, seed, comment="synthetic seed=%d" % seed)
    stores.save_store(store, cfg.path("store", store_path))
    click.echo("store written: %d tokens, %d contextual entries, %d images"
               % (len(store.static.vocab), len(store.contextual.entries),
                  len(store.visual.entries)))


@main.command()
@config_option
@add_options(corpus_options)
@click.option("--index", "index_path", default=None, help="Output index file.")
def index(config_path, queries, docs, qrels, index_path):
    """Build the inverted index and write it to disk."""
    cfg = Config.load(config_path)
    corpus = _load_corpus(cfg, queries, docs, qrels)
    idx = bm25.build_index(corpus)
    payload = {
        "postings": {t: idx.postings[t] for t in sorted(idx.postings)},
        "doc_lengths": idx.doc_lengths,
    }
    with open(cfg.path("index", index_path), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
    click.echo("index written: %d docs, %d terms" % (idx.doc_count, len(idx.postings)))


def _load_index(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    postings = {t: [(d, tf) for d, tf in entries] for t, entries in payload["postings"].items()}
    return bm25.InvertedIndex(postings, payload["doc_lengths"])


@main.command()
@config_option
@add_options(corpus_options)
@click.option("--index", "index_path", default=None)
@click.option("--candidates", "candidates_path", default=None, help="Output candidate file.")
@click.option("--mode", type=click.Choice(["T", "I", "TI"]), default="TI")
@click.option("--k1", type=float, default=None)
@click.option("--b", type=float, default=None)
@click.option("--top-k", type=int, default=None)
def retrieve(config_path, queries, docs, qrels, index_path, candidates_path, mode, k1, b, top_k):
    """Run BM25 candidate generation for every query."""
    cfg = Config.load(config_path)
    corpus = _load_corpus(cfg, queries, docs, qrels)
    idx = _load_index(cfg.path("index", index_path))
    params = cfg.section("bm25", bm25.Bm25Params, k1=k1, b=b, top_k=top_k)
    candidates = bm25.retrieve_all(idx, corpus, mode, params)
    bm25.write_candidates(candidates, cfg.path("candidates", candidates_path))
    click.echo("candidates written for %d queries (mode %s, top_k=%d)"
               % (len(candidates), mode, params.top_k))


@main.command()
@config_option
@add_options(corpus_options)
@click.option("--candidates", "candidates_path", default=None)
@click.option("--out", "out_path", default=None, help="Output qrels with splits.")
@click.option("--leftover", "leftover_path", default=None, help="Output leftover query list.")
@click.option("--seed", type=int, default=None)
def split(config_path, queries, docs, qrels, candidates_path, out_path, leftover_path, seed):
    """80/10/10 random split of queries with a relevant candidate;
    queries without one are reported as leftover."""
    cfg = Config.load(config_path)
    corpus = _load_corpus(cfg, queries, docs, qrels)
    candidates = bm25.read_candidates(cfg.path("candidates", candidates_path))
    seed = cfg.value("seed", seed, 0)

    relevant = corpus.positive_pairs
    eligible, leftover = [], []
    for qid in sorted({q for q, _, _ in corpus.qrels}):
        cand = candidates.get(qid)
        if cand and any((qid, d) in relevant for d in cand.doc_ids):
            eligible.append(qid)
        else:
            leftover.append(qid)

    assignment = assign_splits(eligible, seed)
    new_qrels = [(q, d, assignment[q]) for q, d, _ in corpus.qrels if q in assignment]
    write_qrels(new_qrels, cfg.path("split_qrels", out_path))
    with open(cfg.path("leftover", leftover_path), "w", encoding="utf-8") as fh:
        for qid in leftover:
            fh.write(qid + "\n")
    n = len(eligible)
    counts = {s: sum(1 for q in assignment.values() if q == s) for s in ("train", "valid", "test")}
    click.echo("eligible=%d train=%d valid=%d test=%d leftover=%d"
               % (n, counts["train"], counts["valid"], counts["test"], len(leftover)))


def assign_splits(eligible, seed):
    """Floor of 80% to train, floor of 10% to valid, remainder to test."""
    rng = np.random.default_rng(seed)
    order = [eligible[i] for i in rng.permutation(len(eligible))]
    n = len(order)
    n_train = math.floor(0.8 * n)
    n_valid = math.floor(0.1 * n)
    assignment = {}
    for i, qid in enumerate(order):
        if i < n_train:
            assignment[qid] = "train"
        elif i < n_train + n_valid:
            assignment[qid] = "valid"
        else:
            assignment[qid] = "test"
    return assignment


@main.command()
@config_option
@add_options(corpus_options)
@click.option("--candidates", "candidates_path", default=None)
@click.option("--store", "store_path", default=None)
@click.option("--checkpoint", "checkpoint_path", default=None, help="Output checkpoint.")
@click.option("--report-dir", default=None)
@click.option("--variant", type=click.Choice(["MAN", "CTM", "VMN"]), default=None)
@click.option("--regime", type=click.Choice(["SC1", "SC2", "MAN-A"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--max-epochs", type=int, default=None)
@click.option("--patience", type=int, default=None)
def train(config_path, queries, docs, qrels, candidates_path, store_path, checkpoint_path,
          report_dir, variant, regime, seed, max_epochs, patience):
    """Train a re-ranker and save the best-validation checkpoint."""
    cfg = Config.load(config_path)
    corpus = _load_corpus(cfg, queries, docs, qrels)
    candidates = bm25.read_candidates(cfg.path("candidates", candidates_path))
    store = stores.load_store(cfg.path("store", store_path))
    variant = cfg.value("variant", variant, "MAN")
    regime = cfg.value("regime", regime, "SC2")
    hyper = cfg.section("hyper", Hyperparams)
    tconf = cfg.section("train", trainer.TrainConfig, seed=seed,
                        max_epochs=max_epochs, patience=patience)

    out_dir = Path(cfg.path("report_dir", report_dir))
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train.log"
    initial = ModelParams.initialize(hyper, variant, tconf.seed)
    with open(log_path, "w", encoding="utf-8") as log_fh:
        def log_fn(line):
            log_fh.write(line + "\n")
            click.echo(line)

        result = trainer.train(corpus, candidates, store, hyper, tconf, variant, regime,
                               initial, log_fn=log_fn)
    for warning in result.warnings:
        click.echo("warning: " + warning, err=True)

    scenario = "SC1" if regime == "SC1" else "SC2"
    ckpt_path = cfg.path("checkpoint", checkpoint_path)
    meta = {"best_epoch": result.best_epoch, "best_metric": result.best_metric,
            "regime": regime, "epochs_run": len(result.history)}
    save_checkpoint(ckpt_path, hyper, variant, scenario, result.params, meta)
    with open(str(ckpt_path) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    plots.plot_training_curve(result.history, out_dir / "train_curve.png")
    click.echo("checkpoint saved: best epoch %d, metric %.6f"
               % (result.best_epoch, result.best_metric))


@main.command()
@config_option
@add_options(corpus_options)
@click.option("--candidates", "candidates_path", default=None)
@click.option("--store", "store_path", default=None)
@click.option("--checkpoint", "checkpoint_path", default=None)
@click.option("--report-dir", default=None)
@click.option("--split", "split_name", type=click.Choice(["train", "valid", "test"]),
              default="test")
@click.option("--scenario", type=click.Choice(["SC1", "SC2"]), default=None,
              help="Defaults to the scenario recorded in the checkpoint.")
def evaluate_cmd(config_path, queries, docs, qrels, candidates_path, store_path,
                 checkpoint_path, report_dir, split_name, scenario):
    """Re-rank candidates with a checkpoint and write the metric report."""
    cfg = Config.load(config_path)
    corpus = _load_corpus(cfg, queries, docs, qrels)
    candidates = bm25.read_candidates(cfg.path("candidates", candidates_path))
    store = stores.load_store(cfg.path("store", store_path))
    hyper, variant, ckpt_scenario, params, _meta = load_checkpoint(cfg.path("checkpoint", checkpoint_path))
    scen = ScenarioConfig.for_scenario(scenario or ckpt_scenario)
    report = evaluate.rerank_and_report(params, hyper, variant, corpus, candidates,
                                        split_name, store, scen)
    tsv, png = _report_paths(cfg, report_dir, "report_%s" % split_name)
    evaluate.write_report(report, tsv)
    plots.plot_metric_bars(report, png, title="%s on %s (%s)" % (variant, split_name, scen.scenario))
    for name in report.metric_names:
        click.echo("%s\t%.5f" % (name, report.means[name]))
    click.echo("report: %s" % tsv)


main.add_command(evaluate_cmd, name="evaluate")


@main.command()
@config_option
@add_options(corpus_options)
@click.option("--store", "store_path", default=None)
@click.option("--checkpoint", "checkpoint_path", default=None)
@click.option("--leftover", "leftover_path", default=None, help="Leftover query list file.")
@click.option("--report-dir", default=None)
@click.option("--seed", type=int, default=None)
def leftover(config_path, queries, docs, qrels, store_path, checkpoint_path,
             leftover_path, report_dir, seed):
    """Rank leftover queries' relevant articles against sampled negatives."""
    cfg = Config.load(config_path)
    corpus = _load_corpus(cfg, queries, docs, qrels)
    store = stores.load_store(cfg.path("store", store_path))
    hyper, variant, ckpt_scenario, params, _meta = load_checkpoint(cfg.path("checkpoint", checkpoint_path))
    seed = cfg.value("seed", seed, 0)
    with open(cfg.path("leftover", leftover_path), encoding="utf-8") as fh:
        qids = [line.strip() for line in fh if line.strip()]
    scen = ScenarioConfig.for_scenario(ckpt_scenario)
    report = evaluate.leftover_experiment(params, hyper, variant, corpus, qids, store,
                                          scen, seed)
    tsv, png = _report_paths(cfg, report_dir, "report_leftover")
    evaluate.write_report(report, tsv)
    plots.plot_metric_bars(report, png, title="Leftover queries (%s)" % variant)
    for name in report.metric_names:
        click.echo("%s\t%.5f" % (name, report.means[name]))


@main.command("dump-matrices")
@config_option
@add_options(corpus_options)
@click.option("--store", "store_path", default=None)
@click.option("--checkpoint", "checkpoint_path", default=None)
@click.option("--report-dir", default=None)
@click.option("--query-id", required=True)
@click.option("--doc-id", required=True)
def dump_matrices(config_path, queries, docs, qrels, store_path, checkpoint_path,
                  report_dir, query_id, doc_id):
    """Write the S, G, A, C interaction matrices for one pair as labeled
    CSV grids plus a heatmap figure."""
    cfg = Config.load(config_path)
    corpus = _load_corpus(cfg, queries, docs, qrels)
    store = stores.load_store(cfg.path("store", store_path))
    hyper, variant, ckpt_scenario, params, _meta = load_checkpoint(cfg.path("checkpoint", checkpoint_path))
    if query_id not in corpus.queries:
        raise click.UsageError("unknown query id %r" % query_id)
    if doc_id not in corpus.docs:
        raise click.UsageError("unknown doc id %r" % doc_id)
    scen = ScenarioConfig.for_scenario(ckpt_scenario)
    tensors = interaction_tensors(corpus.queries[query_id], corpus.docs[doc_id],
                                  params, store, scen)
    out = Path(cfg.path("report_dir", report_dir))
    out.mkdir(parents=True, exist_ok=True)
    for name in ("S", "G", "A", "C"):
        path = out / ("matrix_%s_%s_%s.csv" % (name, query_id, doc_id))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("," + ",".join(tensors["d_tokens"]) + "\n")
            for token, row in zip(tensors["q_tokens"], tensors[name]):
                fh.write(token + "," + ",".join("%.10f" % v for v in row) + "\n")
    plots.plot_interaction_heatmaps(tensors, out / ("matrices_%s_%s.png" % (query_id, doc_id)))
    click.echo("matrix dumps written to %s" % out)


if __name__ == "__main__":
    main()
