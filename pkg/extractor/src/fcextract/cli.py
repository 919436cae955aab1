"""Command-line front end for batch feature extraction."""

import logging

import click

from .extract import ExtractionJob, extract
from .ocr import DisabledOcr, OcrClient


@click.group()
def main():
    """Produce embedding-store files for the retrieval engine."""


@main.command("extract")
@click.option("--queries", required=True, type=click.Path(exists=True))
@click.option("--docs", required=True, type=click.Path(exists=True))
@click.option("--image-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out-store", required=True, help="Output embedding store file.")
@click.option("--out-queries", required=True,
              help="Output queries file with ocr_text filled in.")
@click.option("--static-vectors", default=None, type=click.Path(exists=True),
              help="GloVe-format word vector file (hashed fallback if omitted).")
@click.option("--visual-weights", default=None, type=click.Path(exists=True),
              help="ResNet50 state-dict file (seeded init if omitted).")
@click.option("--ocr-endpoint", default=None, help="OCR service URL; omit to disable OCR.")
@click.option("--ocr-api-key-file", default=None, type=click.Path(exists=True),
              help="File whose first line is the OCR API key.")
@click.option("--ocr-cache", default=None, help="Directory for cached OCR responses.")
@click.option("--seed", type=int, default=0)
@click.option("--batch-size", type=int, default=16)
def extract_cmd(queries, docs, image_dir, out_store, out_queries, static_vectors,
                visual_weights, ocr_endpoint, ocr_api_key_file, ocr_cache, seed,
                batch_size):
    """Run OCR and all three encoders over a corpus, write the store."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    if ocr_endpoint:
        api_key = None
        if ocr_api_key_file:
            with open(ocr_api_key_file, encoding="utf-8") as fh:
                api_key = fh.readline().strip()
        ocr = OcrClient(ocr_endpoint, api_key=api_key, cache_dir=ocr_cache)
    else:
        ocr = DisabledOcr()

    job = ExtractionJob(
        queries_path=queries, docs_path=docs, image_dir=image_dir,
        out_store=out_store, out_queries=out_queries,
        static_vectors=static_vectors, visual_weights=visual_weights,
        ocr_client=ocr, seed=seed, batch_size=batch_size,
    )
    result = extract(job)
    for image_id in result.missing_images:
        click.echo("warning: missing image %s" % image_id, err=True)
    for image_id, reason in result.ocr_failures:
        click.echo("warning: OCR failed for %s: %s" % (image_id, reason), err=True)
    c = result.counts
    click.echo("store written: %d tokens, %d contextual entries, %d images "
               "(%d queries, %d docs)"
               % (c["tokens"], c["contextual"], c["images"], c["queries"], c["docs"]))


if __name__ == "__main__":
    main()
