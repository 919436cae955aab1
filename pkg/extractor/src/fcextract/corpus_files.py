"""Reader/writer for the engine's corpus file formats.

  queries file : ``id=<id>\\ttext=<raw text>\\tocr_text=<raw text>\\timage_ids=<a,b,c>``
  docs file    : same without the ``ocr_text`` field

Tokenization mirrors the engine's documented rules: URLs removed,
lowercased, word characters with intra-word apostrophes/hyphens kept.
"""

import re
from dataclasses import dataclass

MAX_QUERY_TOKENS = 100  # tweet text plus image text, prefix kept
MAX_DOC_TOKENS = 1000

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_TOKEN_RE = re.compile(r"\w+(?:['’-]\w+)*")


class CorpusFileError(Exception):
    pass


def tokenize(raw_text):
    return _TOKEN_RE.findall(_URL_RE.sub(" ", raw_text).lower())


@dataclass
class QueryRow:
    id: str
    text: str
    ocr_text: str
    image_ids: list


@dataclass
class DocRow:
    id: str
    text: str
    image_ids: list


def _parse_fields(line, lineno, path):
    fields = {}
    for part in line.rstrip("\n").split("\t"):
        if "=" not in part:
            raise CorpusFileError("%s:%d: malformed field %r" % (path, lineno, part))
        key, value = part.split("=", 1)
        fields[key] = value
    return fields


def _split_ids(value):
    return [i for i in value.split(",") if i]


def read_queries(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            f = _parse_fields(line, lineno, path)
            for key in ("id", "text", "ocr_text", "image_ids"):
                if key not in f:
                    raise CorpusFileError("%s:%d: missing field %r" % (path, lineno, key))
            rows.append(QueryRow(f["id"], f["text"], f["ocr_text"], _split_ids(f["image_ids"])))
    return rows


def read_docs(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            f = _parse_fields(line, lineno, path)
            for key in ("id", "text", "image_ids"):
                if key not in f:
                    raise CorpusFileError("%s:%d: missing field %r" % (path, lineno, key))
            rows.append(DocRow(f["id"], f["text"], _split_ids(f["image_ids"])))
    return rows


def write_queries(rows, path):
    with open(path, "w", encoding="utf-8") as fh:
        for row in sorted(rows, key=lambda r: r.id):
            fh.write("id=%s\ttext=%s\tocr_text=%s\timage_ids=%s\n"
                     % (row.id, row.text, row.ocr_text, ",".join(row.image_ids)))


def query_token_sequence(row):
    """The token positions the engine will ask contextual vectors for:
    tweet tokens then image-text tokens, prefix-truncated."""
    return (tokenize(row.text) + tokenize(row.ocr_text))[:MAX_QUERY_TOKENS]


def doc_token_sequence(row):
    return tokenize(row.text)[:MAX_DOC_TOKENS]
