"""The extraction pipeline: OCR, then the three encoders, then the
binary store plus the OCR-augmented queries file."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import corpus_files, store_writer
from .encoders import ContextualEncoder, StaticTable, VisualEncoder
from .ocr import DisabledOcr

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".gif", ".bmp")


@dataclass
class ExtractionJob:
    queries_path: str
    docs_path: str
    image_dir: str
    out_store: str
    out_queries: str
    static_vectors: str = None  # GloVe-format file; hashed fallback if None
    visual_weights: str = None  # ResNet50 state dict; seeded init if None
    ocr_client: object = field(default_factory=DisabledOcr)
    seed: int = 0
    batch_size: int = 16


@dataclass
class ExtractionResult:
    missing_images: list
    ocr_failures: list
    counts: dict


def resolve_image(image_dir, image_id):
    """Image file for an id, trying common extensions; None if absent."""
    base = Path(image_dir) / image_id
    if base.exists():
        return base
    for ext in IMAGE_EXTENSIONS:
        candidate = base.with_name(base.name + ext)
        if candidate.exists():
            return candidate
    return None


def extract(job):
    queries = corpus_files.read_queries(job.queries_path)
    docs = corpus_files.read_docs(job.docs_path)

    # resolve every referenced image once; unresolvable ids are logged
    image_paths = {}
    missing = []
    for row in list(queries) + list(docs):
        for image_id in row.image_ids:
            if image_id in image_paths or image_id in missing:
                continue
            path = resolve_image(job.image_dir, image_id)
            if path is None:
                log.warning("image %s not found under %s", image_id, job.image_dir)
                missing.append(image_id)
            else:
                image_paths[image_id] = path

    # OCR pass over query images, then rewrite the queries file
    ocr = job.ocr_client
    for row in queries:
        texts = []
        for image_id in row.image_ids:
            path = image_paths.get(image_id)
            if path is None:
                continue
            text = ocr.text_for_image(image_id, path.read_bytes())
            if text:
                texts.append(text)
        row.ocr_text = " ".join(texts)
    corpus_files.write_queries(queries, job.out_queries)

    # token sequences the engine will look up
    sequences = {}
    vocab = set()
    for row in queries:
        sequences[row.id] = corpus_files.query_token_sequence(row)
        vocab.update(sequences[row.id])
    for row in docs:
        sequences[row.id] = corpus_files.doc_token_sequence(row)
        vocab.update(sequences[row.id])

    static_table = StaticTable(job.static_vectors, seed=job.seed)
    contextual_encoder = ContextualEncoder(seed=job.seed)
    visual_encoder = VisualEncoder(seed=job.seed, weights_path=job.visual_weights)

    static = static_table.encode_vocab(sorted(vocab))

    contextual = {}
    for rid in sorted(sequences):
        vecs = contextual_encoder.encode_sequence(sequences[rid])
        for pos in range(vecs.shape[0]):
            contextual[(rid, pos)] = vecs[pos]

    visual = {}
    ordered_ids = sorted(image_paths)
    for start in range(0, len(ordered_ids), job.batch_size):
        chunk = ordered_ids[start : start + job.batch_size]
        feats = visual_encoder.encode_batch([image_paths[i] for i in chunk])
        for image_id, vec in zip(chunk, feats):
            visual[image_id] = vec

    comment = "fcextract static=%s contextual=%s visual=%s ocr=%s seed=%d" % (
        static_table.description, contextual_encoder.description,
        visual_encoder.description,
        "disabled" if isinstance(ocr, DisabledOcr) else "enabled", job.seed)
    store_writer.write_store(job.out_store, static, contextual, visual, comment)

    return ExtractionResult(
        missing_images=missing,
        ocr_failures=list(getattr(ocr, "failures", ())),
        counts={"tokens": len(static), "contextual": len(contextual),
                "images": len(visual), "queries": len(queries), "docs": len(docs)},
    )
