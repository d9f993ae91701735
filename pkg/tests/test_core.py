import json

import numpy as np
import pytest

from rankshap.core import (
    AttributionVector, Coalition, CorpusError, Document, Query, TokenizerConfig, apply_coalition,
    build_feature_space, make_instance, read_corpus, read_qrels, read_queries, tokenize,
)

NO_STEM = TokenizerConfig(stemming="none")


def doc(id_, text, config=NO_STEM):
    return Document.from_text(id_, text, config)


def test_tokenize_lowercase_no_stem():
    assert tokenize("Best Car to purchase", NO_STEM) == ["best", "car", "to", "purchase"]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_porter_plural():
    assert tokenize("car, cars; CAR!") == ["car", "car", "car"]


def test_tokenize_stopwords_after_stemming():
    cfg = TokenizerConfig(stemming="porter", stopwords=frozenset({"the", "car"}))
    assert tokenize("The cars run", cfg) == ["run"]


def test_tokenize_keeps_case_when_asked():
    assert tokenize("Car car", TokenizerConfig(lowercase=False, stemming="none")) == ["Car", "car"]


def test_feature_space_union_is_sorted():
    q = Query.from_text("q", "a b", NO_STEM)
    fs = build_feature_space(q, [doc("d1", "b c")])
    assert fs.features == ("a", "b", "c") and fs.m == 3


def test_feature_space_cap_keeps_query_tokens():
    q = Query.from_text("q", "a b", NO_STEM)
    assert build_feature_space(q, [doc("d1", "b c")], cap=2).features == ("a", "b")


def test_feature_space_cap_at_m_is_uncapped():
    q = Query.from_text("q", "x y", NO_STEM)
    docs = [doc("d1", "a b"), doc("d2", "c")]
    assert build_feature_space(q, docs, cap=5) == build_feature_space(q, docs)


def test_feature_space_cap_prefers_frequent_tokens():
    q = Query.from_text("q", "x", NO_STEM)
    docs = [doc("d1", "a b b c"), doc("d2", "b c")]
    assert build_feature_space(q, docs, cap=3).features == ("b", "c", "x")


def test_mask_removes_every_occurrence():
    q = Query.from_text("q", "car", NO_STEM)
    docs = [doc("d1", "car car dealer"), doc("d2", "dealer")]
    inst = make_instance(q, docs)
    z = np.ones(inst.m, bool)
    z[inst.feature_space.index["car"]] = False
    qt, dt = apply_coalition(inst, z)
    assert qt == [] and dt[0] == ["dealer"]


def test_full_and_empty_coalitions():
    q = Query.from_text("q", "a", NO_STEM)
    docs = [doc("d1", "a b a"), doc("d2", "c")]
    inst = make_instance(q, docs)
    qt, dt = apply_coalition(inst, Coalition.full(inst.m))
    assert qt == ["a"] and dt == [["a", "b", "a"], ["c"]]
    qt, dt = apply_coalition(inst, Coalition.empty(inst.m))
    assert qt == [] and dt == [[], []]


def test_capped_tokens_survive_masking():
    q = Query.from_text("q", "a", NO_STEM)
    docs = [doc("d1", "a b c"), doc("d2", "c d")]
    inst = make_instance(q, docs, cap=2)
    _, dt = apply_coalition(inst, Coalition.empty(inst.m))
    assert all(t not in inst.feature_space.index for toks in dt for t in toks)
    assert sum(map(len, dt)) == int(inst.extra_len.sum())


def test_instance_counts_and_presence():
    q = Query.from_text("q", "a", NO_STEM)
    inst = make_instance(q, [doc("d1", "a a b"), doc("d2", "b")])
    assert inst.counts.tolist() == [[2, 1], [0, 1]]
    assert inst.presence.tolist() == [[True, True], [False, True]]
    assert inst.query_features().tolist() == [0]
    with pytest.raises(ValueError):
        inst.counts[0, 0] = 5


def test_instance_validation():
    q = Query.from_text("q", "a", NO_STEM)
    with pytest.raises(ValueError):
        make_instance(q, [doc("d1", "a")])
    with pytest.raises(ValueError):
        make_instance(q, [doc("d1", "a"), doc("d1", "b")])


def test_coalition_wrapper():
    c = Coalition.from_members(4, [0, 2])
    assert c.size == 2 and len(c) == 4 and repr(c) == "Coalition(1010)"
    assert c == Coalition([1, 0, 1, 0]) and hash(c) == hash(Coalition([1, 0, 1, 0]))


def test_attribution_vector_rejects_non_finite():
    with pytest.raises(ValueError):
        AttributionVector([1.0, np.nan], 0.0, "x", "y")
    a = AttributionVector([0.1, -0.5, 0.5], 0.0, "x", "y")
    assert a.top(2) == [(1, -0.5), (2, 0.5)]


def test_readers(tmp_path):
    (tmp_path / "c.jsonl").write_text('{"id": "d1", "text": "Cars"}\n\n{"id": "d2", "text": "b"}\n')
    (tmp_path / "q.jsonl").write_text(json.dumps({"id": "q1", "text": "car", "candidates": ["d1"]}) + "\n")
    (tmp_path / "r.jsonl").write_text('{"query_id": "q1", "doc_id": "d1", "rel": 2}\n')
    docs = read_corpus(tmp_path / "c.jsonl")
    assert docs["d1"].tokens == ("car",)
    assert read_queries(tmp_path / "q.jsonl")["q1"].candidates == ("d1",)
    assert read_qrels(tmp_path / "r.jsonl") == {"q1": {"d1": 2.0}}


@pytest.mark.parametrize("body", ['{"id": "d1"}\n', "not json\n", '{"id": "d1", "text": "a"}\n' * 2, "[1]\n"])
def test_reader_errors(tmp_path, body):
    (tmp_path / "c.jsonl").write_text(body)
    with pytest.raises(CorpusError):
        read_corpus(tmp_path / "c.jsonl")


def test_missing_file():
    with pytest.raises(CorpusError):
        read_corpus("/nonexistent/corpus.jsonl")


def test_qrels_negative_rejected(tmp_path):
    (tmp_path / "r.jsonl").write_text('{"query_id": "q", "doc_id": "d", "rel": -1}\n')
    with pytest.raises(CorpusError):
        read_qrels(tmp_path / "r.jsonl")
