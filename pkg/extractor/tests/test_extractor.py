import json

import numpy as np
import pytest
from PIL import Image

from fcextract import corpus_files, store_writer
from fcextract.encoders import ContextualEncoder, StaticTable
from fcextract.extract import ExtractionJob, extract, resolve_image
from fcextract.ocr import DisabledOcr, OcrClient

from fcrank import stores as engine_stores
from fcrank.corpus import ingest_corpus, tokenize as engine_tokenize


N_QUERIES, N_DOCS, N_IMAGES = 12, 8, 10


@pytest.fixture(scope="module")
def mini_corpus(tmp_path_factory):
    """20 records and 10 generated images, written in the corpus format."""
    root = tmp_path_factory.mktemp("mini")
    images = root / "images"
    images.mkdir()
    rng = np.random.default_rng(0)
    for i in range(N_IMAGES):
        arr = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        Image.fromarray(arr, "RGB").save(images / ("img%02d.png" % i))

    texts = [
        "Fake quote circulating about the senator's speech",
        "BREAKING: river turns green overnight, locals shocked",
        "Did this celebrity really say that? see https://example.com/post",
        "Old photo re-shared as current flood damage",
    ]
    with open(root / "queries.tsv", "w", encoding="utf-8") as fh:
        for i in range(N_QUERIES):
            image_ids = "img%02d" % (i % N_IMAGES) if i % 3 else ""
            fh.write("id=q%02d\ttext=%s number %d\tocr_text=\timage_ids=%s\n"
                     % (i, texts[i % len(texts)], i, image_ids))
    with open(root / "docs.tsv", "w", encoding="utf-8") as fh:
        for i in range(N_DOCS):
            image_ids = "img%02d,img%02d" % (i, (i + 2) % N_IMAGES)
            fh.write("id=d%02d\ttext=Fact check article %d: the claim is false. %s"
                     "\timage_ids=%s\n" % (i, i, texts[(i + 1) % len(texts)], image_ids))
    with open(root / "qrels.tsv", "w", encoding="utf-8") as fh:
        for i in range(N_DOCS):
            fh.write("q%02d\td%02d\ttrain\n" % (i, i))
    return root


def run_extract(root, out_dir, **kwargs):
    out_dir.mkdir(parents=True, exist_ok=True)
    job = ExtractionJob(
        queries_path=str(root / "queries.tsv"),
        docs_path=str(root / "docs.tsv"),
        image_dir=str(root / "images"),
        out_store=str(out_dir / "store.bin"),
        out_queries=str(out_dir / "queries.tsv"),
        **kwargs,
    )
    return job, extract(job)


class TestStoreContract:
    def test_loads_through_engine_with_full_coverage(self, mini_corpus, tmp_path):
        _, result = run_extract(mini_corpus, tmp_path / "out")
        assert result.missing_images == []
        store = engine_stores.load_store(tmp_path / "out" / "store.bin")

        assert store.static.vectors.shape[1] == 300
        assert len(store.visual.entries) == N_IMAGES
        for vec in store.visual.entries.values():
            assert vec.shape == (2048,)

        # the engine can ingest the emitted queries file and look up a
        # contextual vector for every position it will ever ask for
        corpus = ingest_corpus(tmp_path / "out" / "queries.tsv",
                               mini_corpus / "docs.tsv", mini_corpus / "qrels.tsv")
        from fcrank.corpus import ScenarioConfig, build_query_text
        for qid, q in corpus.queries.items():
            n = len(build_query_text(q, ScenarioConfig.sc2()))
            vecs = store.contextual.lookup_range(qid, n)
            assert vecs.shape == (n, 1024)
        for did, d in corpus.docs.items():
            store.contextual.lookup_range(did, len(d.doc_tokens))

    def test_engine_scores_a_pair_from_extracted_store(self, mini_corpus, tmp_path):
        from fcrank.corpus import ScenarioConfig
        from fcrank.model import Hyperparams, ModelParams, score_pair

        _, _ = run_extract(mini_corpus, tmp_path / "out")
        store = engine_stores.load_store(tmp_path / "out" / "store.bin")
        corpus = ingest_corpus(tmp_path / "out" / "queries.tsv",
                               mini_corpus / "docs.tsv", mini_corpus / "qrels.tsv")
        hyper = Hyperparams(proj_dim=8, filters=2, kmax=2, num_cnns=1)
        params = ModelParams.initialize(hyper, "MAN", seed=0)
        score = score_pair(corpus.queries["q01"], corpus.docs["d01"], params, hyper,
                           "MAN", store, ScenarioConfig.sc2())
        assert np.isfinite(score)

    def test_deterministic_bytes(self, mini_corpus, tmp_path):
        run_extract(mini_corpus, tmp_path / "a")
        run_extract(mini_corpus, tmp_path / "b")
        assert ((tmp_path / "a" / "store.bin").read_bytes()
                == (tmp_path / "b" / "store.bin").read_bytes())
        assert ((tmp_path / "a" / "queries.tsv").read_bytes()
                == (tmp_path / "b" / "queries.tsv").read_bytes())

    def test_ocr_disabled_leaves_ocr_text_empty(self, mini_corpus, tmp_path):
        run_extract(mini_corpus, tmp_path / "out")
        for row in corpus_files.read_queries(tmp_path / "out" / "queries.tsv"):
            assert row.ocr_text == ""

    def test_missing_image_logged_not_fatal(self, mini_corpus, tmp_path):
        root = tmp_path / "broken"
        root.mkdir()
        (root / "images").mkdir()
        (root / "queries.tsv").write_text(
            "id=q0\ttext=hello world\tocr_text=\timage_ids=ghost\n")
        (root / "docs.tsv").write_text("id=d0\ttext=article text\timage_ids=\n")
        _, result = run_extract(root, tmp_path / "out")
        assert result.missing_images == ["ghost"]
        store = engine_stores.load_store(tmp_path / "out" / "store.bin")
        assert store.visual.entries == {}


class TestStoreWriter:
    def test_dimension_mismatch_aborts(self, tmp_path):
        with pytest.raises(store_writer.StoreWriteError):
            store_writer.write_store(tmp_path / "s.bin",
                                     {"word": np.zeros(301)}, {}, {}, "c")
        with pytest.raises(store_writer.StoreWriteError):
            store_writer.write_store(tmp_path / "s.bin", {},
                                     {("r", 0): np.zeros(1024)},
                                     {"img": np.zeros(7)}, "c")

    def test_comment_round_trips_through_engine(self, tmp_path):
        store_writer.write_store(tmp_path / "s.bin", {}, {}, {}, "params go here")
        assert engine_stores.load_store(tmp_path / "s.bin").comment == "params go here"


class TestTokenizerContract:
    CASES = [
        "Obama: “I won't leave!” https://t.co/x",
        "BREAKING   news!!!",
        "re-elected, it's ’twas... 100%",
        "only a url https://example.com",
        "",
    ]

    def test_matches_engine_tokenizer(self):
        for raw in self.CASES:
            assert corpus_files.tokenize(raw) == engine_tokenize(raw)


class TestEncoders:
    def test_contextual_is_context_sensitive(self):
        enc = ContextualEncoder(seed=0)
        a = enc.encode_sequence(["bank", "of", "the", "river"])
        b = enc.encode_sequence(["bank", "holds", "my", "money"])
        assert not np.allclose(a[0], b[0])

    def test_contextual_deterministic(self):
        a = ContextualEncoder(seed=0).encode_sequence(["same", "input"])
        b = ContextualEncoder(seed=0).encode_sequence(["same", "input"])
        assert np.array_equal(a, b)

    def test_static_glove_file(self, tmp_path):
        path = tmp_path / "vectors.txt"
        path.write_text("hello " + " ".join(["0.5"] * 300) + "\n")
        table = StaticTable(str(path))
        assert table.encode("hello")[0] == pytest.approx(0.5)
        assert np.array_equal(table.encode("absent"), np.zeros(300, dtype=np.float32))

    def test_static_glove_bad_width(self, tmp_path):
        from fcextract.encoders import EncoderError
        path = tmp_path / "vectors.txt"
        path.write_text("hello 1.0 2.0\n")
        with pytest.raises(EncoderError):
            StaticTable(str(path))

    def test_static_hashed_deterministic_unit(self):
        a, b = StaticTable(seed=3), StaticTable(seed=3)
        va = a.encode("token")
        assert np.array_equal(va, b.encode("token"))
        assert np.linalg.norm(va) == pytest.approx(1.0, abs=1e-6)
        assert not np.array_equal(va, StaticTable(seed=4).encode("token"))


class FakeResponse:
    def __init__(self, payload, status=200):
        self.payload = payload
        self.status = status

    def raise_for_status(self):
        if self.status != 200:
            raise RuntimeError("HTTP %d" % self.status)

    def json(self):
        return self.payload


class TestOcrClient:
    def test_cache_prevents_second_call(self, tmp_path):
        calls = []

        def post(url, files, headers):
            calls.append(url)
            return FakeResponse({"text": "seen words"})

        client = OcrClient("http://ocr", cache_dir=tmp_path, post_fn=post)
        assert client.text_for_image("img1", b"bytes") == "seen words"
        assert client.text_for_image("img1", b"bytes") == "seen words"
        assert len(calls) == 1
        cached = list(tmp_path.glob("*.json"))
        assert len(cached) == 1
        assert json.loads(cached[0].read_text()) == {"text": "seen words"}

    def test_failure_degrades_to_empty(self):
        client = OcrClient("http://ocr",
                           post_fn=lambda *a: FakeResponse({}, status=500))
        assert client.text_for_image("imgX", b"bytes") == ""
        assert client.failures and client.failures[0][0] == "imgX"

    def test_parsed_results_shape(self):
        payload = {"ParsedResults": [{"ParsedText": "line one"},
                                     {"ParsedText": "line two"}]}
        client = OcrClient("http://ocr", post_fn=lambda *a: FakeResponse(payload))
        assert client.text_for_image("img", b"x") == "line one line two"

    def test_disabled_client(self):
        assert DisabledOcr().text_for_image("img", b"x") == ""


class TestOcrIntoPipeline:
    def test_ocr_text_lands_in_queries_file(self, mini_corpus, tmp_path):
        class StubOcr:
            failures = ()

            def text_for_image(self, image_id, image_bytes):
                return "words from " + image_id

        _, result = run_extract(mini_corpus, tmp_path / "out", ocr_client=StubOcr())
        rows = corpus_files.read_queries(tmp_path / "out" / "queries.tsv")
        with_images = [r for r in rows if r.image_ids]
        assert with_images
        for row in with_images:
            assert row.ocr_text == "words from " + row.image_ids[0]
        # the contextual table covers the now-longer query sequences
        store = engine_stores.load_store(tmp_path / "out" / "store.bin")
        for row in with_images:
            n = len(corpus_files.query_token_sequence(row))
            assert store.contextual.lookup_range(row.id, n).shape == (n, 1024)


class TestResolveImage:
    def test_extension_probing(self, tmp_path):
        (tmp_path / "pic.png").write_bytes(b"x")
        assert resolve_image(tmp_path, "pic").name == "pic.png"
        assert resolve_image(tmp_path, "pic.png").name == "pic.png"
        assert resolve_image(tmp_path, "nope") is None
