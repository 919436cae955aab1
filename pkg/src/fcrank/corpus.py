"""Corpus ingestion: tweets (queries), fact-checking articles (documents),
relevance judgments and train/valid/test splits.

File formats (all line-delimited, diff-able):
  queries file : ``id=<id>\\ttext=<raw text>\\tocr_text=<raw text>\\timage_ids=<a,b,c>``
  docs file    : same without the ``ocr_text`` field
  qrels file   : ``query_id\\tdoc_id\\tsplit`` with split in {train, valid, test}
"""

import re
from dataclasses import dataclass, field

MAX_QUERY_IMAGES = 4
MAX_DOC_IMAGES = 17
MAX_DOC_LEN = 1000

SPLITS = ("train", "valid", "test")

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
# word characters, allowing apostrophes/hyphens inside a token (won't, re-elect)
_TOKEN_RE = re.compile(r"\w+(?:['’-]\w+)*")


class CorpusError(Exception):
    """Malformed corpus file or dangling cross-reference."""


def tokenize(raw_text):
    """Lowercased word tokens with URLs removed and punctuation stripped.

    Intra-word apostrophes and hyphens survive. Deterministic and
    idempotent: re-tokenizing the joined output is a no-op.
    """
    text = _URL_RE.sub(" ", raw_text).lower()
    return _TOKEN_RE.findall(text)


@dataclass
class QueryRecord:
    id: str
    tweet_tokens: list
    ocr_tokens: list
    image_ids: list


@dataclass
class DocumentRecord:
    id: str
    doc_tokens: list
    image_ids: list


@dataclass
class ScenarioConfig:
    """Query-side text construction for the two testing scenarios."""

    scenario: str  # "SC1" or "SC2"
    max_query_len: int
    max_doc_len: int = MAX_DOC_LEN

    @classmethod
    def sc1(cls):
        return cls("SC1", 50)

    @classmethod
    def sc2(cls):
        return cls("SC2", 100)

    @classmethod
    def for_scenario(cls, name):
        if name == "SC1":
            return cls.sc1()
        if name == "SC2":
            return cls.sc2()
        raise ValueError("unknown scenario: %r" % (name,))


def build_query_text(q, cfg):
    """Query token sequence under a scenario.

    SC1 uses only the tweet's own words; SC2 appends the words read out
    of the tweet's images. Truncation keeps the prefix.
    """
    if cfg.scenario == "SC1":
        toks = q.tweet_tokens
    else:
        toks = q.tweet_tokens + q.ocr_tokens
    return toks[: cfg.max_query_len]


@dataclass
class Corpus:
    """Immutable after ingest; safe for concurrent reads."""

    queries: dict = field(default_factory=dict)  # id -> QueryRecord
    docs: dict = field(default_factory=dict)  # id -> DocumentRecord
    qrels: list = field(default_factory=list)  # (query_id, doc_id, split)
    warnings: list = field(default_factory=list)

    @property
    def positive_pairs(self):
        return {(q, d) for q, d, _ in self.qrels}

    def qrels_for_split(self, split):
        return [(q, d) for q, d, s in self.qrels if s == split]

    def split_of(self, query_id):
        for q, _, s in self.qrels:
            if q == query_id:
                return s
        return None

    def counts(self):
        return {
            "queries": len(self.queries),
            "docs": len(self.docs),
            "positive_pairs": len(self.positive_pairs),
        }


def _clean_field(value):
    # record files are tab/newline delimited; squash both inside values
    return re.sub(r"[\t\r\n]+", " ", value)


def _parse_record_line(line, lineno, path, fields):
    parts = line.rstrip("\n").split("\t")
    rec = {}
    for part in parts:
        if "=" not in part:
            raise CorpusError("%s:%d: field without '=': %r" % (path, lineno, part))
        key, value = part.split("=", 1)
        rec[key] = value
    missing = [f for f in fields if f not in rec]
    if missing:
        raise CorpusError("%s:%d: missing fields %s" % (path, lineno, missing))
    return rec


def _parse_image_ids(raw):
    return [i for i in raw.split(",") if i]


def ingest_corpus(query_file, doc_file, qrel_file):
    """Read the three corpus files and resolve cross-references.

    Records that are empty after tokenization are rejected with a
    warning rather than silently dropped. A qrel that names an unknown
    (or rejected) id is an error.
    """
    corpus = Corpus()

    with open(query_file, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = _parse_record_line(line, lineno, query_file, ("id", "text", "ocr_text", "image_ids"))
            qid = rec["id"]
            if qid in corpus.queries:
                raise CorpusError("%s:%d: duplicate query id %r" % (query_file, lineno, qid))
            tweet_tokens = tokenize(rec["text"])
            if not tweet_tokens:
                corpus.warnings.append("query %s rejected: no tokens after cleaning" % qid)
                continue
            image_ids = _parse_image_ids(rec["image_ids"])
            if len(image_ids) > MAX_QUERY_IMAGES:
                corpus.warnings.append(
                    "query %s: %d images, keeping first %d" % (qid, len(image_ids), MAX_QUERY_IMAGES)
                )
                image_ids = image_ids[:MAX_QUERY_IMAGES]
            corpus.queries[qid] = QueryRecord(qid, tweet_tokens, tokenize(rec["ocr_text"]), image_ids)

    with open(doc_file, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = _parse_record_line(line, lineno, doc_file, ("id", "text", "image_ids"))
            did = rec["id"]
            if did in corpus.docs:
                raise CorpusError("%s:%d: duplicate doc id %r" % (doc_file, lineno, did))
            doc_tokens = tokenize(rec["text"])[:MAX_DOC_LEN]
            if not doc_tokens:
                corpus.warnings.append("doc %s rejected: no tokens after cleaning" % did)
                continue
            image_ids = _parse_image_ids(rec["image_ids"])
            if len(image_ids) > MAX_DOC_IMAGES:
                corpus.warnings.append(
                    "doc %s: %d images, keeping first %d" % (did, len(image_ids), MAX_DOC_IMAGES)
                )
                image_ids = image_ids[:MAX_DOC_IMAGES]
            corpus.docs[did] = DocumentRecord(did, doc_tokens, image_ids)

    seen_pairs = set()
    with open(qrel_file, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise CorpusError("%s:%d: expected 3 tab-separated fields" % (qrel_file, lineno))
            qid, did, split = parts
            if split not in SPLITS:
                raise CorpusError("%s:%d: unknown split %r" % (qrel_file, lineno, split))
            if qid not in corpus.queries:
                raise CorpusError("%s:%d: unknown query id %r" % (qrel_file, lineno, qid))
            if did not in corpus.docs:
                raise CorpusError("%s:%d: unknown doc id %r" % (qrel_file, lineno, did))
            if (qid, did) in seen_pairs:
                raise CorpusError("%s:%d: pair (%s, %s) appears twice" % (qrel_file, lineno, qid, did))
            seen_pairs.add((qid, did))
            corpus.qrels.append((qid, did, split))

    return corpus


def write_corpus(corpus, query_file, doc_file, qrel_file):
    """Write a corpus back to its three files (tokens joined by spaces).

    Because tokenization is idempotent, re-ingesting the written files
    reproduces the records exactly.
    """
    with open(query_file, "w", encoding="utf-8") as fh:
        for qid in sorted(corpus.queries):
            q = corpus.queries[qid]
            fh.write(
                "id=%s\ttext=%s\tocr_text=%s\timage_ids=%s\n"
                % (qid, _clean_field(" ".join(q.tweet_tokens)),
                   _clean_field(" ".join(q.ocr_tokens)), ",".join(q.image_ids))
            )
    with open(doc_file, "w", encoding="utf-8") as fh:
        for did in sorted(corpus.docs):
            d = corpus.docs[did]
            fh.write(
                "id=%s\ttext=%s\timage_ids=%s\n"
                % (did, _clean_field(" ".join(d.doc_tokens)), ",".join(d.image_ids))
            )
    write_qrels(corpus.qrels, qrel_file)


def write_qrels(qrels, path):
    with open(path, "w", encoding="utf-8") as fh:
        for qid, did, split in qrels:
            fh.write("%s\t%s\t%s\n" % (qid, did, split))
