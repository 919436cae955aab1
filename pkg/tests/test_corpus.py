import pytest
from hypothesis import given, strategies as st

from fcrank.corpus import (
    CorpusError,
    QueryRecord,
    ScenarioConfig,
    build_query_text,
    ingest_corpus,
    tokenize,
    write_corpus,
)


class TestTokenize:
    def test_empty_input(self):
        assert tokenize("") == []

    def test_punctuation_and_apostrophes(self):
        assert tokenize('Obama: "I won\'t leave"') == ["obama", "i", "won't", "leave"]

    def test_url_removal(self):
        assert tokenize("Breaking https://t.co/x NEWS") == ["breaking", "news"]

    def test_hyphens_kept_inside_words(self):
        assert tokenize("re-elect him") == ["re-elect", "him"]

    @given(st.text(max_size=200))
    def test_idempotent(self, text):
        once = tokenize(text)
        assert tokenize(" ".join(once)) == once


class TestBuildQueryText:
    def test_sc1_truncates_to_50(self):
        q = QueryRecord("q", ["t%d" % i for i in range(60)], ["o"], [])
        out = build_query_text(q, ScenarioConfig.sc1())
        assert out == q.tweet_tokens[:50]

    def test_sc2_empty_expansion(self):
        q = QueryRecord("q", ["t%d" % i for i in range(10)], [], [])
        assert build_query_text(q, ScenarioConfig.sc2()) == q.tweet_tokens

    def test_sc2_truncates_expansion(self):
        q = QueryRecord("q", ["t%d" % i for i in range(90)], ["o%d" % i for i in range(30)], [])
        out = build_query_text(q, ScenarioConfig.sc2())
        assert out == q.tweet_tokens + q.ocr_tokens[:10]

    @given(
        st.lists(st.sampled_from(["a", "b", "c"]), max_size=150),
        st.lists(st.sampled_from(["x", "y"]), max_size=150),
        st.sampled_from(["SC1", "SC2"]),
    )
    def test_length_bound(self, tweet, ocr, scenario):
        cfg = ScenarioConfig.for_scenario(scenario)
        q = QueryRecord("q", tweet, ocr, [])
        assert len(build_query_text(q, cfg)) <= cfg.max_query_len


def _write(tmp_path, queries, docs, qrels):
    qf = tmp_path / "queries.tsv"
    df = tmp_path / "docs.tsv"
    rf = tmp_path / "qrels.tsv"
    qf.write_text("".join(queries))
    df.write_text("".join(docs))
    rf.write_text("".join(qrels))
    return qf, df, rf


def _qline(qid, text, ocr="", images=""):
    return "id=%s\ttext=%s\tocr_text=%s\timage_ids=%s\n" % (qid, text, ocr, images)


def _dline(did, text, images=""):
    return "id=%s\ttext=%s\timage_ids=%s\n" % (did, text, images)


class TestIngest:
    def test_counts_and_references(self, tmp_path):
        paths = _write(
            tmp_path,
            [_qline("q1", "fake obama quote", "breaking news", "i1,i2"),
             _qline("q2", "trump said what")],
            [_dline("d1", "the quote is fabricated", "i3"), _dline("d2", "no he did not")],
            ["q1\td1\ttrain\n", "q2\td2\ttest\n"],
        )
        corpus = ingest_corpus(*paths)
        assert corpus.counts() == {"queries": 2, "docs": 2, "positive_pairs": 2}
        assert corpus.queries["q1"].ocr_tokens == ["breaking", "news"]
        assert corpus.queries["q1"].image_ids == ["i1", "i2"]

    def test_empty_qrels(self, tmp_path):
        paths = _write(tmp_path, [_qline("q1", "hello world")], [_dline("d1", "a doc")], [])
        assert ingest_corpus(*paths).counts()["positive_pairs"] == 0

    def test_dangling_doc_id(self, tmp_path):
        paths = _write(tmp_path, [_qline("q1", "hello")], [_dline("d1", "doc")],
                       ["q1\tdX\ttrain\n"])
        with pytest.raises(CorpusError, match="unknown doc id.*dX"):
            ingest_corpus(*paths)

    def test_malformed_line_reports_number(self, tmp_path):
        paths = _write(tmp_path, [_qline("q1", "hello"), "garbage line\n"],
                       [_dline("d1", "doc")], [])
        with pytest.raises(CorpusError, match=":2:"):
            ingest_corpus(*paths)

    def test_pair_in_one_split_only(self, tmp_path):
        paths = _write(tmp_path, [_qline("q1", "hello")], [_dline("d1", "doc")],
                       ["q1\td1\ttrain\n", "q1\td1\ttest\n"])
        with pytest.raises(CorpusError, match="twice"):
            ingest_corpus(*paths)

    def test_empty_record_rejected_with_warning(self, tmp_path):
        paths = _write(tmp_path, [_qline("q1", "ok text"), _qline("q2", "https://only.a/url")],
                       [_dline("d1", "doc")], [])
        corpus = ingest_corpus(*paths)
        assert "q2" not in corpus.queries
        assert any("q2" in w for w in corpus.warnings)

    def test_snopes_shaped_counts(self, tmp_path):
        # 11,202 positive pairs from 11,167 queries and 1,703 articles
        queries, qrels = [], []
        for i in range(11167):
            queries.append(_qline("q%05d" % i, "claim number %d spreading" % i))
            qrels.append("q%05d\td%04d\ttrain\n" % (i, i % 1703))
        for i in range(35):  # 35 queries carry a second relevant article
            qrels.append("q%05d\td%04d\ttrain\n" % (i, (i + 1) % 1703))
        docs = [_dline("d%04d" % i, "article %d debunks it" % i) for i in range(1703)]
        corpus = ingest_corpus(*_write(tmp_path, queries, docs, qrels))
        assert corpus.counts() == {"queries": 11167, "docs": 1703, "positive_pairs": 11202}

    def test_round_trip(self, tmp_path):
        paths = _write(
            tmp_path,
            [_qline("q1", "Fake OBAMA quote!", "breaking", "i1"), _qline("q2", "other text")],
            [_dline("d1", "The quote, is fabricated.", "i2")],
            ["q1\td1\ttrain\n"],
        )
        corpus = ingest_corpus(*paths)
        out = tmp_path / "out"
        out.mkdir()
        files = out / "q.tsv", out / "d.tsv", out / "r.tsv"
        write_corpus(corpus, *files)
        again = ingest_corpus(*files)
        assert again.queries == corpus.queries
        assert again.docs == corpus.docs
        assert again.qrels == corpus.qrels
