"""Constructed corpora with planted relevance signal, used by the demo
data, the end-to-end smoke runs and the scaled-down experiments."""

import numpy as np

from .corpus import Corpus, DocumentRecord, QueryRecord


def _words(prefix, n):
    return ["%s%03d" % (prefix, i) for i in range(n)]


def planted_corpus(seed=0, n_queries=20, n_docs=50, textual_signal=True,
                   visual_signal=True, split="train"):
    """Query i is relevant to doc i.

    With textual_signal, the query copies half of its paired doc's
    distinctive tokens; without it, every doc (and every tweet) carries
    the same token sequence, so text cannot distinguish candidates at
    all. With visual_signal, the query shares exactly one image with its
    paired doc and with no other doc.
    """
    rng = np.random.default_rng(seed)
    vocab = _words("w", 300)
    corpus = Corpus()

    flat_text = ["alpha", "beta", "gamma", "delta", "epsilon"]
    doc_tokens = {}
    for i in range(n_docs):
        did = "d%03d" % i
        if textual_signal:
            tokens = list(rng.choice(vocab, size=8, replace=False))
        else:
            tokens = list(flat_text)
        doc_tokens[did] = tokens
        image_ids = ["img_d%03d" % i]
        if visual_signal and i < n_queries:
            image_ids = ["img_shared%03d" % i] + image_ids
        corpus.docs[did] = DocumentRecord(did, tokens, image_ids)

    for i in range(n_queries):
        qid = "q%03d" % i
        did = "d%03d" % i
        if textual_signal:
            tokens = doc_tokens[did][:4] + list(rng.choice(vocab, size=3, replace=False))
        else:
            tokens = list(flat_text)
        image_ids = ["img_shared%03d" % i] if visual_signal else ["img_q%03d" % i]
        corpus.queries[qid] = QueryRecord(qid, tokens, [], image_ids)
        corpus.qrels.append((qid, did, split))
    return corpus


def ocr_signal_corpus(n_queries=30, n_docs=200, ocr_only=12):
    """Corpus where `ocr_only` of the queries carry their matching terms
    only in image text; their tweet text instead matches a large block
    of decoy documents, so tweet-only retrieval cannot find the target.
    """
    corpus = Corpus()
    for i in range(n_docs):
        did = "d%03d" % i
        tokens = ["u%03d%s" % (i, c) for c in "abcde"]
        if i >= n_docs // 2:
            tokens.append("decoy")
        corpus.docs[did] = DocumentRecord(did, tokens, [])

    for i in range(n_queries):
        qid = "q%03d" % i
        target = ["u%03d%s" % (i, c) for c in "abc"]
        if i < ocr_only:
            corpus.queries[qid] = QueryRecord(qid, ["decoy", "filler"], target, [])
        else:
            corpus.queries[qid] = QueryRecord(qid, target, [], [])
        corpus.qrels.append((qid, "d%03d" % i, "train"))
    return corpus
