"""Frozen feature tables: static word vectors (300-d), contextual token
vectors (1024-d, one per token occurrence) and raw visual features
(2048-d per image), plus a seeded synthetic generator for self-contained
experiments.

Binary layout (all integers little-endian, vectors float32 LE):

  magic           8 bytes  b"FCEMBED1"
  comment         u32 length + UTF-8 bytes (free-form provenance)
  header          3 x (u64 count, u32 dim) for static / contextual / visual
  static section      count entries: u32 key-length, key UTF-8, u32 veclen, floats
  contextual section  count entries: u32 id-length, record id UTF-8,
                      u32 position, u32 veclen, floats
  visual section      like static, keyed by image id

Entries are written in sorted key order so generation is byte-stable.
"""

import hashlib
import struct

import numpy as np

from .corpus import build_query_text, ScenarioConfig

MAGIC = b"FCEMBED1"
STATIC_DIM = 300
CONTEXTUAL_DIM = 1024
VISUAL_DIM = 2048


class StoreError(Exception):
    """Base class for embedding-store failures."""


class BadMagicError(StoreError):
    pass


class TruncatedStoreError(StoreError):
    pass


class DimensionError(StoreError):
    pass


class StaticWordTable:
    """Token -> 300-d vector; out-of-vocabulary tokens get the zero row."""

    def __init__(self, vocab, vectors):
        self.vocab = vocab  # token -> row index
        self.vectors = vectors  # |V| x 300 float32
        self._zero = np.zeros(vectors.shape[1] if vectors.size else STATIC_DIM, dtype=np.float32)

    def lookup(self, token):
        idx = self.vocab.get(token)
        if idx is None:
            return self._zero
        return self.vectors[idx]

    def lookup_all(self, tokens):
        return np.stack([self.lookup(t) for t in tokens]) if tokens else np.zeros((0, STATIC_DIM), dtype=np.float32)


class ContextualTokenTable:
    """(record_id, position) -> 1024-d vector.

    Positions are contiguous from 0, so coverage per record is just a
    length; lookups past it are errors, not zeros.
    """

    def __init__(self, entries):
        self.entries = entries  # (record_id, position) -> vector
        self.record_len = {}
        for rid, pos in entries:
            self.record_len[rid] = max(self.record_len.get(rid, 0), pos + 1)

    def lookup(self, record_id, position):
        if record_id not in self.record_len:
            raise KeyError("uncovered record: %r" % (record_id,))
        if not 0 <= position < self.record_len[record_id]:
            raise IndexError(
                "position %d out of range for record %r (length %d)"
                % (position, record_id, self.record_len[record_id])
            )
        return self.entries[(record_id, position)]

    def lookup_range(self, record_id, length):
        return np.stack([self.lookup(record_id, p) for p in range(length)]) if length else np.zeros(
            (0, CONTEXTUAL_DIM), dtype=np.float32
        )


class VisualFeatureTable:
    """image_id -> 2048-d raw visual feature."""

    def __init__(self, entries):
        self.entries = entries

    def lookup(self, image_id):
        if image_id not in self.entries:
            raise KeyError("unknown image id: %r" % (image_id,))
        return self.entries[image_id]

    def lookup_all(self, image_ids):
        return np.stack([self.lookup(i) for i in image_ids]) if image_ids else np.zeros(
            (0, VISUAL_DIM), dtype=np.float32
        )


class EmbeddingStore:
    def __init__(self, static, contextual, visual, comment=""):
        self.static = static
        self.contextual = contextual
        self.visual = visual
        self.comment = comment


def _write_u32(fh, v):
    fh.write(struct.pack("<I", v))


def _write_key(fh, key):
    raw = key.encode("utf-8")
    _write_u32(fh, len(raw))
    fh.write(raw)


def _write_vec(fh, vec):
    vec = np.asarray(vec, dtype="<f4")
    _write_u32(fh, vec.size)
    fh.write(vec.tobytes())


def save_store(store, path):
    static_keys = sorted(store.static.vocab)
    ctx_keys = sorted(store.contextual.entries)
    vis_keys = sorted(store.visual.entries)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        _write_key(fh, store.comment)
        fh.write(struct.pack("<QI", len(static_keys), STATIC_DIM))
        fh.write(struct.pack("<QI", len(ctx_keys), CONTEXTUAL_DIM))
        fh.write(struct.pack("<QI", len(vis_keys), VISUAL_DIM))
        for token in static_keys:
            _write_key(fh, token)
            _write_vec(fh, store.static.vectors[store.static.vocab[token]])
        for rid, pos in ctx_keys:
            _write_key(fh, rid)
            _write_u32(fh, pos)
            _write_vec(fh, store.contextual.entries[(rid, pos)])
        for image_id in vis_keys:
            _write_key(fh, image_id)
            _write_vec(fh, store.visual.entries[image_id])


class _Reader:
    def __init__(self, fh):
        self.fh = fh

    def read(self, n, what):
        data = self.fh.read(n)
        if len(data) != n:
            raise TruncatedStoreError("truncated store while reading %s" % what)
        return data

    def u32(self, what):
        return struct.unpack("<I", self.read(4, what))[0]

    def key(self, what):
        return self.read(self.u32(what), what).decode("utf-8")

    def vec(self, dim, what):
        n = self.u32(what)
        if n != dim:
            raise DimensionError("%s: expected %d-d vector, payload has %d" % (what, dim, n))
        return np.frombuffer(self.read(4 * n, what), dtype="<f4").copy()


def load_store(path):
    """Load all three tables; header-declared counts and dims are enforced."""
    with open(path, "rb") as fh:
        r = _Reader(fh)
        if r.read(len(MAGIC), "magic") != MAGIC:
            raise BadMagicError("bad magic: not an embedding store")
        comment = r.key("comment")
        (n_static, d_static) = struct.unpack("<QI", r.read(12, "header"))
        (n_ctx, d_ctx) = struct.unpack("<QI", r.read(12, "header"))
        (n_vis, d_vis) = struct.unpack("<QI", r.read(12, "header"))
        for name, dim, want in (("static", d_static, STATIC_DIM),
                                ("contextual", d_ctx, CONTEXTUAL_DIM),
                                ("visual", d_vis, VISUAL_DIM)):
            if dim != want:
                raise DimensionError("%s section declares %d-d, expected %d-d" % (name, dim, want))

        vocab = {}
        vectors = np.zeros((n_static, d_static), dtype=np.float32)
        for i in range(n_static):
            token = r.key("static key")
            vocab[token] = i
            vectors[i] = r.vec(d_static, "static vector for %r" % token)

        ctx = {}
        for _ in range(n_ctx):
            rid = r.key("contextual key")
            pos = r.u32("contextual position")
            ctx[(rid, pos)] = r.vec(d_ctx, "contextual vector for (%r, %d)" % (rid, pos))

        vis = {}
        for _ in range(n_vis):
            image_id = r.key("visual key")
            vis[image_id] = r.vec(d_vis, "visual vector for %r" % image_id)

        if fh.read(1):
            raise StoreError("trailing bytes after final section")

    return EmbeddingStore(StaticWordTable(vocab, vectors), ContextualTokenTable(ctx),
                          VisualFeatureTable(vis), comment)


def corpus_vocab(corpus):
    vocab = set()
    for q in corpus.queries.values():
        vocab.update(q.tweet_tokens)
        vocab.update(q.ocr_tokens)
    for d in corpus.docs.values():
        vocab.update(d.doc_tokens)
    return vocab


def corpus_image_ids(corpus):
    ids = set()
    for q in corpus.queries.values():
        ids.update(q.image_ids)
    for d in corpus.docs.values():
        ids.update(d.image_ids)
    return ids


def _unit(rng, dim):
    v = rng.standard_normal(dim)
    return (v / np.linalg.norm(v)).astype(np.float32)


def _content_rng(seed, kind, text):
    """Generator keyed by content, so identical inputs always map to
    identical vectors regardless of corpus composition."""
    digest = hashlib.sha256(("%s\x1f%s" % (kind, text)).encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([seed, key]))


def generate_synthetic(corpus, seed, comment="synthetic store"):
    """Seeded pseudo-random unit vectors covering a whole corpus.

    Every vector is a pure function of (seed, content): static vectors of
    the token, visual features of the image id, and contextual vectors of
    the record's full token sequence plus the position. Like a real
    contextual encoder, distinct occurrences of a word get distinct
    vectors, but records with identical text get identical sequences.
    Query coverage spans the SC2-built text, whose SC1 counterpart is a
    prefix of it.
    """
    sc2 = ScenarioConfig.sc2()

    vocab_tokens = sorted(corpus_vocab(corpus))
    vocab = {t: i for i, t in enumerate(vocab_tokens)}
    vectors = np.stack(
        [_unit(_content_rng(seed, "static", t), STATIC_DIM) for t in vocab_tokens]
    ) if vocab_tokens else np.zeros((0, STATIC_DIM), dtype=np.float32)

    def record_vectors(record_id, tokens):
        rng = _content_rng(seed, "contextual", "\x1f".join(tokens))
        return {(record_id, pos): _unit(rng, CONTEXTUAL_DIM) for pos in range(len(tokens))}

    ctx = {}
    for qid in sorted(corpus.queries):
        ctx.update(record_vectors(qid, build_query_text(corpus.queries[qid], sc2)))
    for did in sorted(corpus.docs):
        ctx.update(record_vectors(did, corpus.docs[did].doc_tokens))

    vis = {i: _unit(_content_rng(seed, "visual", i), VISUAL_DIM)
           for i in sorted(corpus_image_ids(corpus))}

    return EmbeddingStore(StaticWordTable(vocab, vectors), ContextualTokenTable(ctx),
                          VisualFeatureTable(vis), comment)
