"""Triplet hinge-loss training: hard negatives from the query's own
candidate list, Adam updates with an L2 penalty, early stopping on the
mean of validation HIT@3 and NDCG@3.

The augmented regime (MAN-A) trains on the union of SC2 triples and SC1
triples (same queries, SC1 query-text construction) while validating and
testing under SC2.
"""

from dataclasses import dataclass, field

import numpy as np

from .corpus import ScenarioConfig
from .evaluate import rerank_and_report
from .model import build_pair_inputs, forward, backward

REGIMES = ("SC1", "SC2", "MAN-A")


class TrainError(Exception):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 16
    negatives_per_positive: int = 3
    weight_decay: float = 0.001
    patience: int = 10
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        for name in ("learning_rate", "batch_size", "negatives_per_positive",
                     "weight_decay", "max_epochs"):
            if getattr(self, name) <= 0:
                raise ValueError("%s must be positive" % name)


@dataclass(frozen=True)
class Triple:
    query_id: str
    positive_doc_id: str
    negative_doc_id: str


def sample_triples(corpus, candidates, split, k_neg, seed, warnings=None):
    """For each positive pair of a split, k_neg negatives drawn uniformly
    without replacement from the query's non-relevant candidates.
    Queries with no non-relevant candidates are skipped with a warning.
    """
    rng = np.random.default_rng(seed)
    relevant = corpus.positive_pairs
    triples = []
    for qid, pos_did in sorted(corpus.qrels_for_split(split)):
        cand = candidates.get(qid)
        pool = [d for d in (cand.doc_ids if cand else []) if (qid, d) not in relevant]
        if not pool:
            if warnings is not None:
                warnings.append("query %s: no non-relevant candidates, skipped" % qid)
            continue
        take = min(k_neg, len(pool))
        idx = rng.choice(len(pool), size=take, replace=False)
        for i in sorted(idx):
            triples.append(Triple(qid, pos_did, pool[i]))
    return triples


def hinge_loss(f_pos, f_neg):
    return max(0.0, 1.0 - f_pos + f_neg)


class InputCache:
    """Memoized frozen pair embeddings (per query, doc, scenario)."""

    def __init__(self, corpus, store):
        self.corpus = corpus
        self.store = store
        self._cache = {}

    def get(self, qid, did, scenario_cfg):
        key = (qid, did, scenario_cfg.scenario)
        if key not in self._cache:
            self._cache[key] = build_pair_inputs(
                self.corpus.queries[qid], self.corpus.docs[did], self.store, scenario_cfg
            )
        return self._cache[key]


def triple_loss_and_grads(triple, scenario_cfg, params, hyper, variant, inputs_cache):
    pos_in = inputs_cache.get(triple.query_id, triple.positive_doc_id, scenario_cfg)
    neg_in = inputs_cache.get(triple.query_id, triple.negative_doc_id, scenario_cfg)
    f_pos, pos_cache = forward(pos_in, params, hyper, variant)
    f_neg, neg_cache = forward(neg_in, params, hyper, variant)
    loss = hinge_loss(f_pos, f_neg)
    if loss <= 0.0:
        return 0.0, None
    g_pos = backward(-1.0, pos_in, params, hyper, pos_cache)
    g_neg = backward(1.0, neg_in, params, hyper, neg_cache)
    grads = {name: g_pos[name] + g_neg[name] for name in g_pos}
    return loss, grads


def batch_loss_and_grads(batch, params, hyper, variant, inputs_cache, weight_decay):
    """Mean hinge loss over (triple, scenario) pairs plus the L2 penalty
    weight_decay * ||params||^2; returns (loss, gradients)."""
    total = {name: np.zeros_like(t) for name, t in params.tensors.items()}
    loss_sum = 0.0
    for triple, scenario_cfg in batch:
        loss, grads = triple_loss_and_grads(triple, scenario_cfg, params, hyper, variant, inputs_cache)
        if not np.isfinite(loss):
            raise TrainError("non-finite loss on triple %r" % (triple,))
        loss_sum += loss
        if grads is not None:
            for name in total:
                total[name] += grads[name]
    n = len(batch)
    loss = loss_sum / n + weight_decay * params.sq_norm()
    for name, tensor in params.tensors.items():
        total[name] = total[name] / n + 2.0 * weight_decay * tensor
    return loss, total


class AdamState:
    """Standard Adam with bias correction, one moment pair per tensor."""

    def __init__(self, params, config):
        self.config = config
        self.m = {name: np.zeros_like(t) for name, t in params.tensors.items()}
        self.v = {name: np.zeros_like(t) for name, t in params.tensors.items()}
        self.t = 0

    def step(self, params, grads):
        c = self.config
        self.t += 1
        for name, tensor in params.tensors.items():
            g = grads[name]
            self.m[name] = c.adam_beta1 * self.m[name] + (1 - c.adam_beta1) * g
            self.v[name] = c.adam_beta2 * self.v[name] + (1 - c.adam_beta2) * g * g
            m_hat = self.m[name] / (1 - c.adam_beta1 ** self.t)
            v_hat = self.v[name] / (1 - c.adam_beta2 ** self.t)
            tensor -= c.learning_rate * m_hat / (np.sqrt(v_hat) + c.adam_eps)


class EarlyStopper:
    """Stop when the validation metric has not strictly improved for
    `patience` epochs; ties resolve toward the earlier epoch."""

    def __init__(self, patience):
        self.patience = patience
        self.best_metric = -np.inf
        self.best_epoch = None
        self.stale = 0

    def update(self, epoch, metric):
        """Returns True when training should stop after this epoch."""
        if metric > self.best_metric:
            self.best_metric = metric
            self.best_epoch = epoch
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


@dataclass
class TrainResult:
    params: object  # best-validation ModelParams
    best_epoch: int
    best_metric: float
    history: list = field(default_factory=list)  # one dict per epoch
    warnings: list = field(default_factory=list)
    final_params: object = None  # params after the last epoch run


def _epoch_seed(seed, epoch):
    return np.random.SeedSequence([seed, epoch]).generate_state(1)[0]


def train(corpus, candidates, store, hyper, config, variant, regime, initial_params,
          log_fn=None):
    """Run the full training loop; returns the best-validation parameters.

    `regime` picks the query-text construction for training triples:
    SC1, SC2, or MAN-A (SC2 plus SC1 triples, validation stays SC2).
    """
    if regime not in REGIMES:
        raise ValueError("unknown regime: %r" % (regime,))
    eval_cfg = ScenarioConfig.sc1() if regime == "SC1" else ScenarioConfig.sc2()
    train_cfgs = {
        "SC1": [ScenarioConfig.sc1()],
        "SC2": [ScenarioConfig.sc2()],
        "MAN-A": [ScenarioConfig.sc2(), ScenarioConfig.sc1()],
    }[regime]

    params = initial_params.copy()
    adam = AdamState(params, config)
    stopper = EarlyStopper(config.patience)
    inputs_cache = InputCache(corpus, store)
    result = TrainResult(params=params.copy(), best_epoch=0, best_metric=-np.inf)

    first_triples = build_epoch_triples(corpus, candidates, config, train_cfgs, epoch=1,
                                        warnings=result.warnings)
    if not first_triples:
        raise TrainError("no training triples could be constructed")

    for epoch in range(1, config.max_epochs + 1):
        triples = (first_triples if epoch == 1 else
                   build_epoch_triples(corpus, candidates, config, train_cfgs, epoch))
        rng = np.random.default_rng(_epoch_seed(config.seed, epoch))
        order = rng.permutation(len(triples))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = [triples[i] for i in order[start : start + config.batch_size]]
            loss, grads = batch_loss_and_grads(
                batch, params, hyper, variant, inputs_cache, config.weight_decay
            )
            adam.step(params, grads)
            epoch_loss += loss
            n_batches += 1
        epoch_loss /= n_batches

        valid = rerank_and_report(params, hyper, variant, corpus, candidates, "valid",
                                  store, eval_cfg)
        hit3 = valid.means["hit@3"]
        ndcg3 = valid.means["ndcg@3"]
        metric = (hit3 + ndcg3) / 2.0
        improved = metric > stopper.best_metric
        stop = stopper.update(epoch, metric)
        if improved:
            result.params = params.copy()
            result.best_epoch = epoch
            result.best_metric = metric
        entry = {
            "epoch": epoch,
            "train_loss": epoch_loss,
            "valid_hit@3": hit3,
            "valid_ndcg@3": ndcg3,
            "stale": stopper.stale,
        }
        result.history.append(entry)
        if log_fn is not None:
            log_fn(
                "epoch=%d train_loss=%.6f valid_hit@3=%.6f valid_ndcg@3=%.6f stale=%d"
                % (epoch, epoch_loss, hit3, ndcg3, stopper.stale)
            )
        if stop:
            break
    result.final_params = params
    return result


def build_epoch_triples(corpus, candidates, config, train_cfgs, epoch, warnings=None):
    """Resample triples with an epoch-derived seed; in the augmented
    regime each scenario contributes its own triple set."""
    out = []
    for cfg in train_cfgs:
        seed = _epoch_seed(config.seed, epoch)
        for triple in sample_triples(corpus, candidates, "train",
                                     config.negatives_per_positive, seed, warnings):
            out.append((triple, cfg))
    return out
