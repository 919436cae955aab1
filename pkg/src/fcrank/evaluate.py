"""Ranking metrics (NDCG@K, HIT@K), candidate re-ranking reports and the
leftover-query experiment (queries whose stage-1 top-K misses every
relevant article, ranked against sampled negatives instead).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .model import score_pair

METRIC_KS = (1, 3, 5)
METRIC_NAMES = tuple("ndcg@%d" % k for k in METRIC_KS) + tuple("hit@%d" % k for k in METRIC_KS)


def ndcg_at_k(flags, k):
    """Binary-relevance NDCG; zero relevant documents scores 0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    dcg = sum(flags[i] / math.log2(i + 2) for i in range(min(k, len(flags))))
    total_rel = sum(flags)
    if total_rel == 0:
        return 0.0
    idcg = sum(1.0 / math.log2(i + 2) for i in range(min(k, total_rel)))
    return dcg / idcg


def hit_at_k(flags, k):
    if k < 1:
        raise ValueError("k must be >= 1")
    return 1.0 if any(flags[:k]) else 0.0


def metrics_for_flags(flags, names=METRIC_NAMES):
    out = {}
    for name in names:
        metric, k = name.split("@")
        fn = ndcg_at_k if metric == "ndcg" else hit_at_k
        out[name] = fn(flags, int(k))
    return out


@dataclass
class MetricReport:
    """Macro-averaged metrics over evaluated queries; queries without
    candidates are excluded but counted."""

    metric_names: tuple = METRIC_NAMES
    per_query: dict = field(default_factory=dict)  # qid -> {metric: value}
    excluded: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def query_count(self):
        return len(self.per_query)

    @property
    def means(self):
        if not self.per_query:
            return {name: 0.0 for name in self.metric_names}
        return {
            name: sum(m[name] for m in self.per_query.values()) / len(self.per_query)
            for name in self.metric_names
        }


def rank_docs(q, doc_ids, params, hyper, variant, corpus, store, scenario_cfg):
    """Score candidates with the model, sort descending, ties by doc id."""
    scored = [
        (score_pair(q, corpus.docs[did], params, hyper, variant, store, scenario_cfg), did)
        for did in doc_ids
    ]
    scored.sort(key=lambda sv: (-sv[0], sv[1]))
    return [did for _, did in scored]


def rerank_and_report(params, hyper, variant, corpus, candidates, split, store, scenario_cfg):
    relevant = corpus.positive_pairs
    report = MetricReport()
    split_qids = sorted({qid for qid, _, s in corpus.qrels if s == split})
    for qid in split_qids:
        cand = candidates.get(qid)
        if cand is None or not cand.ranked:
            report.excluded.append(qid)
            continue
        ranked = rank_docs(
            corpus.queries[qid], cand.doc_ids, params, hyper, variant, corpus, store, scenario_cfg
        )
        flags = [1 if (qid, did) in relevant else 0 for did in ranked]
        report.per_query[qid] = metrics_for_flags(flags)
    return report


LEFTOVER_METRICS = ("ndcg@1", "ndcg@3", "hit@3")


def leftover_experiment(params, hyper, variant, corpus, leftover_qids, store, scenario_cfg,
                        seed, pool_size=50):
    """Rank each leftover query's x relevant articles against pool_size - x
    sampled non-relevant articles (seeded, from the same collection)."""
    rng = np.random.default_rng(seed)
    relevant = corpus.positive_pairs
    report = MetricReport(metric_names=LEFTOVER_METRICS)
    all_docs = sorted(corpus.docs)
    for qid in sorted(leftover_qids):
        rel = [d for d in all_docs if (qid, d) in relevant]
        non_rel = [d for d in all_docs if (qid, d) not in relevant]
        want = pool_size - len(rel)
        if want > len(non_rel):
            report.warnings.append(
                "query %s: only %d non-relevant docs available (wanted %d)"
                % (qid, len(non_rel), want)
            )
            sampled = non_rel
        else:
            idx = rng.choice(len(non_rel), size=want, replace=False)
            sampled = [non_rel[i] for i in sorted(idx)]
        pool = rel + sampled
        ranked = rank_docs(
            corpus.queries[qid], pool, params, hyper, variant, corpus, store, scenario_cfg
        )
        flags = [1 if (qid, did) in relevant else 0 for did in ranked]
        report.per_query[qid] = metrics_for_flags(flags, LEFTOVER_METRICS)
    return report


def write_report(report, path):
    """Delimited report: summary block then one row per query, stable order."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("queries\t%d\n" % report.query_count)
        fh.write("excluded\t%d\n" % len(report.excluded))
        for name in report.metric_names:
            fh.write("mean\t%s\t%.10f\n" % (name, report.means[name]))
        fh.write("query_id\t" + "\t".join(report.metric_names) + "\n")
        for qid in sorted(report.per_query):
            row = report.per_query[qid]
            fh.write(qid + "\t" + "\t".join("%.10f" % row[n] for n in report.metric_names) + "\n")
        for warning in report.warnings:
            fh.write("# warning: %s\n" % warning)
