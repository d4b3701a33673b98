import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from compmine import align
from compmine.align import (
    NULL, Alignment, BilingualDictionary, Model1, TranslationTable, dictionary_from_counts,
    extract_dictionary, intersect, learn_dictionary, merge_dictionaries, read_pharaoh,
    train_model1, viterbi_align, write_pharaoh,
)
from compmine.errors import DataError

DAS_HAUS = [
    ("das haus".split(), "the house".split()),
    ("das buch".split(), "the book".split()),
    ("ein buch".split(), "a book".split()),
]


def random_corpus(rng, n_pairs=None, vocab=8):
    n_pairs = n_pairs or int(rng.integers(1, 12))
    out = []
    for _ in range(n_pairs):
        s = [f"s{k}" for k in rng.integers(0, vocab, size=int(rng.integers(1, 7)))]
        t = [f"t{k}" for k in rng.integers(0, vocab, size=int(rng.integers(1, 7)))]
        out.append((s, t))
    return out


def test_das_haus_matches_textbook_em():
    ref = oracles.model1_em(DAS_HAUS, 10)[-1]
    table = train_model1(DAS_HAUS, 10)
    for s, row in ref.items():
        for t, p in row.items():
            assert table.prob(s, t) == pytest.approx(p, abs=1e-12)
    assert table.best("das") == "the"
    assert table.best("buch") == "book"
    assert table.prob("das", "the") == pytest.approx(0.9764516860017496, abs=1e-12)


def test_single_pair_one_iteration():
    table = train_model1([(["a"], ["x"])], 1)
    assert table.prob("a", "x") == 1.0
    assert table.prob(NULL, "x") == 1.0


def test_iteration_zero_is_uniform():
    m = Model1(DAS_HAUS)
    table = m.table()
    for s in ["das", "haus", "buch", "ein", NULL]:
        for t in ["the", "house", "book", "a"]:
            assert table.prob(s, t) == 0.25
    assert table.row_sum("ein") == pytest.approx(1.0)


def test_train_rejects_bad_input():
    with pytest.raises(DataError):
        train_model1([], 3)
    with pytest.raises(DataError):
        train_model1([(["a"], [])], 3)
    with pytest.raises(ValueError):
        train_model1(DAS_HAUS, 0)


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_em_monotone_and_stochastic(seed):
    corpus = random_corpus(np.random.default_rng(seed))
    m = Model1(corpus)
    prev = -math.inf
    for _ in range(8):
        ll = m.step()
        assert ll >= prev - 1e-9
        prev = ll
        table = m.table()
        for s in table.src_vocab:
            assert abs(table.row_sum(s) - 1.0) <= 1e-9
    assert m.log_likelihood() >= prev - 1e-9


def test_loglik_matches_oracle(rng):
    corpus = random_corpus(rng, 9)
    hist = oracles.model1_em(corpus, 4)
    m = Model1(corpus)
    for it in range(4):
        assert m.log_likelihood() == pytest.approx(oracles.model1_loglik(corpus, hist[it]), abs=1e-9)
        m.step()


def test_thread_and_chunk_determinism(monkeypatch, rng):
    corpus = random_corpus(rng, 50)
    base = train_model1(corpus, 4)
    monkeypatch.setattr(align, "CHUNK_SENTENCES", 7)
    chunked = train_model1(corpus, 4, threads=4)
    assert chunked.probs.keys() == base.probs.keys()
    for s in base.probs:
        for t in base.probs[s]:
            assert abs(chunked.probs[s][t] - base.probs[s][t]) <= 1e-15
    assert train_model1(corpus, 4, threads=4).probs == chunked.probs


def test_table_roundtrip(tmp_path):
    table = train_model1(DAS_HAUS, 3)
    table.save(tmp_path / "t.tsv")
    back = TranslationTable.load(tmp_path / "t.tsv")
    assert back.probs == table.probs
    assert back.iterations == 3


def _table(rows):
    vocab = frozenset(t for r in rows.values() for t in r)
    return TranslationTable(rows, vocab, iterations=1)


def test_viterbi_examples():
    t = _table({NULL: {"x": 0.01}, "a": {"x": 0.9}, "b": {"x": 0.09}})
    assert viterbi_align(t, (["a", "b"], ["x"])).links == {(1, 1)}
    assert viterbi_align(t, (["a"], ["x", "unseen"])).links == {(1, 1)}
    tie = _table({NULL: {"x": 0.1}, "a": {"x": 0.45}, "b": {"x": 0.45}})
    assert viterbi_align(tie, (["a", "b"], ["x"])).links == {(1, 1)}
    null_wins = _table({NULL: {"x": 0.5}, "a": {"x": 0.5}})
    assert viterbi_align(null_wins, (["a"], ["x"])).links == set()


def test_intersect_examples():
    fwd = Alignment(frozenset({(1, 1), (2, 2)}), 2, 2)
    rev = Alignment(frozenset({(1, 1)}), 2, 2)
    assert intersect(fwd, rev).links == {(1, 1)}
    assert intersect(fwd, Alignment(frozenset({(1, 2)}), 2, 2)).links == set()
    assert intersect(fwd, fwd.reversed()) == fwd
    with pytest.raises(DataError):
        intersect(fwd, Alignment(frozenset(), 3, 2))


@st.composite
def alignment_pair(draw):
    ls, lt = draw(st.integers(1, 6)), draw(st.integers(1, 6))
    # viterbi alignments: every target (resp. source) position links to at most one source
    fwd = {(draw(st.integers(1, ls)), j) for j in range(1, lt + 1) if draw(st.booleans())}
    rev = {(draw(st.integers(1, lt)), i) for i in range(1, ls + 1) if draw(st.booleans())}
    return Alignment(frozenset(fwd), ls, lt), Alignment(frozenset(rev), lt, ls)


@given(alignment_pair())
def test_intersect_properties(pair):
    fwd, rev = pair
    out = intersect(fwd, rev)
    assert out.links <= fwd.links
    assert out.links <= rev.reversed().links
    assert len(out) <= min(len(fwd), len(rev))
    assert out.is_one_to_one()


def test_alignment_validation_and_pharaoh(tmp_path):
    with pytest.raises(DataError):
        Alignment(frozenset({(0, 1)}), 2, 2)
    a = Alignment(frozenset({(1, 2), (3, 1)}), 3, 2)
    assert a.to_pharaoh() == "0-1 2-0"
    assert Alignment.from_pharaoh("0-1 2-0", 3, 2) == a
    write_pharaoh([a, Alignment(frozenset(), 1, 1)], tmp_path / "a.txt")
    assert read_pharaoh(tmp_path / "a.txt", [(3, 2), (1, 1)])[0] == a
    with pytest.raises(DataError):
        read_pharaoh(tmp_path / "a.txt", [(3, 2)])
    with pytest.raises(DataError):
        Alignment.from_pharaoh("0:1", 2, 2)


def test_dictionary_from_counts_examples():
    d = dictionary_from_counts({("chat", "cat"): 3, ("chat", "dog"): 1})
    assert set(d) == {("chat", "cat")}
    assert set(dictionary_from_counts({("a", "y"): 2, ("a", "x"): 2})) == {("a", "x")}
    assert len(dictionary_from_counts({("r", "s"): 1}, min_count=2)) == 0


def test_extract_dictionary_one_entry_per_source(rng):
    corpus = random_corpus(rng, 40)
    d, fwd, rev = learn_dictionary(corpus, 5)
    srcs = [s for s, _ in d]
    assert len(srcs) == len(set(srcs))
    assert d == extract_dictionary(corpus, fwd, rev)
    with pytest.raises(DataError):
        extract_dictionary([], fwd, rev)


def test_das_haus_dictionary():
    d, _, _ = learn_dictionary(DAS_HAUS, 10)
    assert ("das", "the") in d and ("buch", "book") in d


def test_merge_dictionaries():
    a = BilingualDictionary({(f"s{i}", f"t{i}"): "seed" for i in range(100)})
    b = BilingualDictionary({(f"r{i}", f"t{i}"): "related-language" for i in range(50)})
    assert len(merge_dictionaries(a, b)) == 150
    same = merge_dictionaries(BilingualDictionary({("x", "y"): "seed"}),
                              BilingualDictionary({("x", "y"): "related-language"}))
    assert same.entries == {("x", "y"): "seed"}
    both = merge_dictionaries(BilingualDictionary({("x", "y"): "seed"}),
                              BilingualDictionary({("x", "z"): "related-language"}))
    assert both.translations() == {"x": {"y", "z"}}


def test_dictionary_roundtrip(tmp_path):
    d = BilingualDictionary({("b", "y"): "seed", ("a", "x"): "related-language"})
    d.save(tmp_path / "d.tsv")
    assert BilingualDictionary.load(tmp_path / "d.tsv") == d
    (tmp_path / "two.tsv").write_text("a\tx\n")
    assert BilingualDictionary.load(tmp_path / "two.tsv").entries == {("a", "x"): "seed"}
    assert d.reversed().entries == {("y", "b"): "seed", ("x", "a"): "related-language"}
