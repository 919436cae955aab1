"""Writer for the engine's binary embedding-store format.

Layout (integers little-endian, vectors float32 LE):

  magic           8 bytes  b"FCEMBED1"
  comment         u32 length + UTF-8 bytes
  header          3 x (u64 count, u32 dim) for static / contextual / visual
  static section      per entry: u32 key-length, key UTF-8, u32 veclen, floats
  contextual section  per entry: u32 id-length, record id UTF-8,
                      u32 position, u32 veclen, floats
  visual section      like static, keyed by image id

Entries are written in sorted key order so output is byte-stable.
"""

import struct

import numpy as np

MAGIC = b"FCEMBED1"
STATIC_DIM = 300
CONTEXTUAL_DIM = 1024
VISUAL_DIM = 2048


class StoreWriteError(Exception):
    pass


def _check_dim(vec, dim, what):
    if vec.shape != (dim,):
        raise StoreWriteError("%s has shape %s, expected (%d,)" % (what, vec.shape, dim))


def _vec_bytes(vec):
    return struct.pack("<I", vec.size) + vec.astype("<f4").tobytes()


def write_store(path, static, contextual, visual, comment):
    """static: token -> (300,) array; contextual: (record_id, position) ->
    (1024,); visual: image_id -> (2048,)."""
    for token, vec in static.items():
        _check_dim(np.asarray(vec), STATIC_DIM, "static vector for %r" % token)
    for (rid, pos), vec in contextual.items():
        _check_dim(np.asarray(vec), CONTEXTUAL_DIM,
                   "contextual vector for %r position %d" % (rid, pos))
    for image_id, vec in visual.items():
        _check_dim(np.asarray(vec), VISUAL_DIM, "visual vector for %r" % image_id)

    comment_bytes = comment.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(comment_bytes)) + comment_bytes)
        fh.write(struct.pack("<QI", len(static), STATIC_DIM))
        fh.write(struct.pack("<QI", len(contextual), CONTEXTUAL_DIM))
        fh.write(struct.pack("<QI", len(visual), VISUAL_DIM))
        for token in sorted(static):
            key = token.encode("utf-8")
            fh.write(struct.pack("<I", len(key)) + key)
            fh.write(_vec_bytes(np.asarray(static[token])))
        for rid, pos in sorted(contextual):
            key = rid.encode("utf-8")
            fh.write(struct.pack("<I", len(key)) + key)
            fh.write(struct.pack("<I", pos))
            fh.write(_vec_bytes(np.asarray(contextual[(rid, pos)])))
        for image_id in sorted(visual):
            key = image_id.encode("utf-8")
            fh.write(struct.pack("<I", len(key)) + key)
            fh.write(_vec_bytes(np.asarray(visual[image_id])))
