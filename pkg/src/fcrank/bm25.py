"""Stage-1 candidate generation: inverted index + BM25.

Three query modes: T (tweet text), I (text read out of the tweet's
images), TI (both concatenated). The standard pipeline uses TI with
candidate lists of 50.
"""

import math
from collections import Counter
from dataclasses import dataclass


@dataclass
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75
    top_k: int = 50

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not 0 <= self.b <= 1:
            raise ValueError("b must be in [0, 1]")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass
class CandidateList:
    query_id: str
    ranked: list  # (doc_id, score), descending score, ties by ascending doc_id

    @property
    def doc_ids(self):
        return [d for d, _ in self.ranked]


class InvertedIndex:
    def __init__(self, postings, doc_lengths):
        self.postings = postings  # token -> [(doc_id, tf)] sorted by doc_id
        self.doc_lengths = doc_lengths
        self.doc_count = len(doc_lengths)
        self.avg_doc_len = sum(doc_lengths.values()) / self.doc_count

    def doc_freq(self, token):
        return len(self.postings.get(token, ()))

    def term_freq(self, token, doc_id):
        for did, tf in self.postings.get(token, ()):
            if did == doc_id:
                return tf
        return 0


def build_index(corpus):
    if not corpus.docs:
        raise ValueError("cannot index an empty corpus")
    postings = {}
    doc_lengths = {}
    for did in sorted(corpus.docs):
        tokens = corpus.docs[did].doc_tokens
        doc_lengths[did] = len(tokens)
        for token, tf in Counter(tokens).items():
            postings.setdefault(token, []).append((did, tf))
    return InvertedIndex(postings, doc_lengths)


def idf(index, token):
    df = index.doc_freq(token)
    return math.log(1.0 + (index.doc_count - df + 0.5) / (df + 0.5))


def bm25_score(index, query_tokens, doc_id, params=None):
    """Robertson-Sparck Jones BM25 with the +1-inside-log IDF.

    Each query-token occurrence contributes its own term in the sum.
    """
    params = params or Bm25Params()
    if doc_id not in index.doc_lengths:
        raise KeyError("unknown doc id: %r" % (doc_id,))
    length_norm = params.k1 * (
        1 - params.b + params.b * index.doc_lengths[doc_id] / index.avg_doc_len
    )
    score = 0.0
    for token in query_tokens:
        tf = index.term_freq(token, doc_id)
        if tf == 0:
            continue
        score += idf(index, token) * tf * (params.k1 + 1) / (tf + length_norm)
    return score


def query_tokens_for_mode(q, mode):
    if mode == "T":
        return list(q.tweet_tokens)
    if mode == "I":
        return list(q.ocr_tokens)
    if mode == "TI":
        return q.tweet_tokens + q.ocr_tokens
    raise ValueError("unknown mode: %r (want T, I or TI)" % (mode,))


def retrieve(index, q, mode="TI", params=None):
    """Top-K candidates for one query; ties broken by ascending doc_id.

    Mode I with no image text yields an empty list rather than an error.
    Every document gets a score (0 when no query term matches), so the
    result matches exhaustive scoring exactly, padding included.
    """
    params = params or Bm25Params()
    tokens = query_tokens_for_mode(q, mode)
    if not tokens:
        return CandidateList(q.id, [])

    scores = {did: 0.0 for did in index.doc_lengths}
    token_counts = Counter(tokens)
    for token, count in token_counts.items():
        token_idf = idf(index, token)
        for did, tf in index.postings.get(token, ()):
            length_norm = params.k1 * (
                1 - params.b + params.b * index.doc_lengths[did] / index.avg_doc_len
            )
            scores[did] = scores.get(did, 0.0) + count * token_idf * tf * (
                params.k1 + 1
            ) / (tf + length_norm)

    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[: params.top_k]
    return CandidateList(q.id, ranked)


def retrieve_all(index, corpus, mode="TI", params=None):
    return {qid: retrieve(index, corpus.queries[qid], mode, params) for qid in sorted(corpus.queries)}


def write_candidates(candidates, path):
    """``query_id<TAB>rank<TAB>doc_id<TAB>score`` lines, one block per query."""
    with open(path, "w", encoding="utf-8") as fh:
        for qid in sorted(candidates):
            for rank, (did, score) in enumerate(candidates[qid].ranked, 1):
                fh.write("%s\t%d\t%s\t%.17g\n" % (qid, rank, did, score))


def read_candidates(path):
    candidates = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 4:
                raise ValueError("%s:%d: expected 4 tab-separated fields" % (path, lineno))
            qid, _rank, did, score = parts
            candidates.setdefault(qid, CandidateList(qid, [])).ranked.append((did, float(score)))
    return candidates
