import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trendseg.corpus import (Article, build_corpus, build_vocabulary, ingest_articles, ingest_events,
                             load_lemmas, load_stopwords, tokenize)
from trendseg.errors import DataError


def _write(path, lines):
    path.write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    return path


def _art(i, text="some text", section=None):
    return json.dumps({"id": f"a{i}", "text": text, "section": section, "published_at": 1000 + i})


def test_ingest_three_articles(tmp_path):
    arts, skipped = ingest_articles(_write(tmp_path / "a.jsonl", [_art(1), _art(2), _art(3)]))
    assert [a.id for a in arts] == ["a1", "a2", "a3"]
    assert skipped == 0


def test_ingest_skips_malformed(tmp_path):
    arts, skipped = ingest_articles(_write(tmp_path / "a.jsonl", [_art(1), "{not json", _art(2)]))
    assert len(arts) == 2
    assert skipped == 1


@pytest.mark.parametrize("line", [
    json.dumps({"id": "", "text": "x", "published_at": 1}),
    json.dumps({"id": "a", "text": "x", "published_at": -5}),
    json.dumps({"id": "a", "text": "x"}),
    json.dumps(["a", "b"]),
])
def test_ingest_rejects_invalid_records(tmp_path, line):
    arts, skipped = ingest_articles(_write(tmp_path / "a.jsonl", [_art(1), line]))
    assert len(arts) == 1 and skipped == 1


def test_ingest_duplicate_ids_skipped(tmp_path):
    arts, skipped = ingest_articles(_write(tmp_path / "a.jsonl", [_art(1), _art(1)]))
    assert len(arts) == 1 and skipped == 1


def test_ingest_empty_file_is_error(tmp_path):
    with pytest.raises(DataError, match="zero valid articles"):
        ingest_articles(_write(tmp_path / "a.jsonl", []))


def test_ingest_unreadable_file(tmp_path):
    with pytest.raises(DataError):
        ingest_articles(tmp_path / "missing.jsonl")


def test_events_unknown_article_dropped(tmp_path):
    rows = [json.dumps({"user_id": "u", "article_id": a, "timestamp": 5, "placement": "home", "dwell_seconds": 30})
            for a in ("a1", "zz", "a2")]
    events, dropped = ingest_events(_write(tmp_path / "e.jsonl", rows), ["a1", "a2"])
    assert [e.article_id for e in events] == ["a1", "a2"]
    assert dropped == 1
    assert events[0].extra == {"dwell_seconds": 30}


def test_tokenize_filter_rules():
    assert tokenize("The Quick brown FOX ab x1y", {"the"}) == ["quick", "brown", "fox"]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_lemmas():
    assert tokenize("running runs", lemmas={"running": "run", "runs": "run"}) == ["run", "run"]


def test_tokenize_keeps_diacritics():
    assert tokenize("Żółć gęślą jaźń") == ["żółć", "gęślą", "jaźń"]


def test_tokenize_lemma_onto_stopword_is_dropped():
    assert tokenize("thee cat", {"the"}, {"thee": "the"}) == ["cat"]


def test_ambiguous_lemma_takes_alphabetically_first(tmp_path):
    path = _write(tmp_path / "l.tsv", ["hotels\thotel", "hotels\thostel", "cats\tcat"])
    assert load_lemmas(path) == {"hotels": "hostel", "cats": "cat"}


def test_stopwords_file(tmp_path):
    assert load_stopwords(_write(tmp_path / "s.txt", ["The", "", "and"])) == {"the", "and"}


def test_vocabulary_min_doc_count():
    docs = [["cat", "dog"], ["dog"], ["dog", "eel"], ["eel"]]
    vocab = build_vocabulary(docs, min_doc_count=2, max_doc_fraction=1.0)
    assert "cat" not in vocab
    assert vocab.terms == ("dog", "eel")


def test_vocabulary_max_doc_fraction():
    docs = [["said", "topic"] if i < 4 else ["said"] for i in range(10)]
    vocab = build_vocabulary(docs, min_doc_count=1, max_doc_fraction=0.5)
    assert "said" not in vocab
    assert "topic" in vocab


def test_vocabulary_empty_is_error():
    with pytest.raises(DataError):
        build_vocabulary([["said"], ["said"]], min_doc_count=1, max_doc_fraction=0.1)


def test_default_doc_frequency_thresholds():
    from trendseg.corpus import DEFAULT_MAX_DOC_FRACTION, DEFAULT_MIN_DOC_COUNT

    assert (DEFAULT_MIN_DOC_COUNT, DEFAULT_MAX_DOC_FRACTION) == (10, 0.10)


def test_build_corpus_counts_empty_docs():
    arts = [Article("a1", "alpha beta"), Article("a2", "alpha gamma"), Article("a3", "zz")]
    corpus = build_corpus(arts, min_doc_count=1, max_doc_fraction=1.0)
    assert [d[0] for d in corpus.docs] == ["a1", "a2"]
    assert corpus.dropped_empty == 1
    assert all(0 <= i < len(corpus.vocabulary) for _, d in corpus.docs for i in d)


text_st = st.text(alphabet=st.sampled_from(list("abcżółXYZ 19,.-_\t")), max_size=80)


@given(text_st)
@settings(max_examples=200, deadline=None)
def test_tokenize_idempotent(text):
    out = tokenize(text, {"abc"})
    assert tokenize(" ".join(out), {"abc"}) == out


@given(st.lists(text_st, min_size=1, max_size=20), st.integers(1, 3), st.floats(0.2, 1.0))
@settings(max_examples=100, deadline=None)
def test_vocabulary_terms_satisfy_every_rule(texts, min_count, max_frac):
    stop = {"abc"}
    docs = [tokenize(t, stop) for t in texts]
    try:
        vocab = build_vocabulary(docs, min_count, max_frac)
    except DataError:
        return
    for term, df in zip(vocab.terms, vocab.doc_freq):
        assert len(term) >= 3 and term.isalpha() and term == term.lower() and term not in stop
        assert df == sum(term in d for d in docs)
        assert min_count <= df <= max_frac * len(docs)
    assert list(vocab.terms) == sorted(vocab.terms)


def test_corpus_deterministic():
    arts = [Article(f"a{i}", f"alpha beta gamma{'x' * (i % 3)} delta") for i in range(6)]
    a = build_corpus(arts, min_doc_count=1, max_doc_fraction=1.0)
    b = build_corpus(list(arts), min_doc_count=1, max_doc_fraction=1.0)
    assert a.docs == b.docs and a.vocabulary == b.vocabulary
