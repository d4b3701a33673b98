import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import random_mining_case
from compmine.align import BilingualDictionary
from compmine.corpus import DocPair, Document, Sentence
from compmine.errors import DataError
from compmine.miner import (
    MinedCorpus, MiningConfig, SimilarityModel, candidates, mine, mutual_best, score_matrices,
    select_mutual_best, sentence_score, word_sim,
)
from compmine.seed import SeedKind, SeedPair
from compmine.synthetic import make_cipher_fixture
from compmine.xembed import EmbeddingSpace


def sent(text, lang="ee"):
    return Sentence.from_raw(text, lang)


def docpair(e_sents, f_sents, i=0):
    de = Document(f"a{i}", "ee", "", tuple(e_sents), (), {"ff": f"b{i}"})
    df = Document(f"b{i}", "ff", "", tuple(f_sents), (), {"ee": f"a{i}"})
    return DocPair(de, df)


def vectors(space):
    return {w: space.vectors[k].tolist() for w, k in space.index.items()}


@pytest.fixture
def toy_model():
    e = EmbeddingSpace(["a", "b", "c"], np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), "ee")
    f = EmbeddingSpace(["x", "y", "z"], np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]), "ff")
    return SimilarityModel(BilingualDictionary({("a", "y"): "seed", ("w", "v"): "seed"}), e, f)


def test_word_sim_cases(toy_model):
    assert word_sim("a", "y", toy_model) == 1.0           # dictionary beats cosine 0
    assert word_sim("a", "x", toy_model) == pytest.approx(1.0)  # identical vectors
    assert word_sim("a", "z", toy_model) == pytest.approx(-1.0)
    assert word_sim("b", "x", toy_model) == 0.0
    assert word_sim("w", "v", toy_model) == 1.0           # dictionary without vectors
    assert word_sim("oov", "x", toy_model) == 0.0
    assert word_sim("w", "x", toy_model) == 0.0
    assert word_sim("y", "a", toy_model, reverse=True) == 1.0
    assert word_sim("x", "c", toy_model, reverse=True) == pytest.approx(1 / np.sqrt(2))


def test_sentence_score_examples(toy_model):
    assert sentence_score(["a"], ["y", "z"], toy_model) == 1.0
    # sim(a, .) max 1, sim(c, .) max cos 45deg
    assert sentence_score(["a", "c"], ["y", "x"], toy_model) == pytest.approx((1 + 1 / np.sqrt(2)) / 2)
    # OOV tokens stay in the denominator
    assert sentence_score(["a", "oov"], ["y"], toy_model) == 0.5
    with pytest.raises(DataError):
        sentence_score([], ["x"], toy_model)
    with pytest.raises(DataError):
        sentence_score(["a"], [], toy_model)


def test_sentence_score_against_oracle(rng):
    pairs, d, e, f = random_mining_case(rng, n_docs=1)
    model = SimilarityModel(d, e, f)
    ve, vf = vectors(e), vectors(f)
    pset, rset = set(d), set(d.reversed())
    e_words = list(e.index) + ["e195", "zz"]
    f_words = list(f.index) + ["f199", "qq"]
    for _ in range(30):
        s = [e_words[k] for k in rng.integers(0, len(e_words), size=6)]
        t = [f_words[k] for k in rng.integers(0, len(f_words), size=8)]
        assert abs(sentence_score(s, t, model) - oracles.avg_max(s, t, pset, ve, vf)) <= 1e-12
        assert abs(sentence_score(t, s, model, reverse=True) - oracles.avg_max(t, s, rset, vf, ve)) <= 1e-12


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_score_properties(seed):
    rng = np.random.default_rng(seed)
    _, d, e, f = random_mining_case(rng, n_docs=1, vocab=30, dim=4)
    model = SimilarityModel(d, e, f)
    e_words, f_words = list(e.index), list(f.index)
    s = [e_words[k] for k in rng.integers(0, len(e_words), size=int(rng.integers(1, 6)))]
    t = [f_words[k] for k in rng.integers(0, len(f_words), size=int(rng.integers(1, 6)))]
    base = sentence_score(s, t, model)
    assert -1 - 1e-12 <= base <= 1 + 1e-12
    extra = f_words[int(rng.integers(len(f_words)))]
    assert sentence_score(s, t + [extra], model) >= base - 1e-15
    # 1.0 exactly when every source token attains similarity 1.0
    attains = all(max(word_sim(w, x, model) for x in t) >= 1.0 for w in s)
    assert (base >= 1.0) == attains


def test_candidates_filters():
    pair = docpair(["a b c", "d e", "f g h i"], ["x y", "z w v", "u t", "s r q"])
    assert len(candidates(pair)) == 12
    pair = docpair(["born in 2019 here"], ["né en 1987 ici", "né en 2019 ici"])
    assert [t.raw for _, t in candidates(pair)] == ["né en 2019 ici"]
    assert len(candidates(pair, MiningConfig(numeric_filter=False))) == 2
    ten, twentyfive = " ".join("w" * 10), " ".join("v" * 25)
    assert candidates(docpair([ten], [twentyfive])) == []
    assert len(candidates(docpair(["", "  ", "a"], ["b", ""]))) == 1


def test_select_mutual_best_rules():
    fwd = np.array([[0.9, 0.8], [0.95, 0.1]])
    rev = np.array([[0.6, 0.7], [0.9, 0.2]])
    mask = np.ones_like(fwd, dtype=bool)
    # row 0 prefers col 0, but col 0 prefers row 1; row 1 <-> col 0 is mutual
    assert select_mutual_best(fwd, rev, mask, 0.5) == [(1, 0)]
    assert select_mutual_best(fwd, rev, mask, 0.95) == []
    # ties resolve to the earliest index
    tie = np.array([[0.7, 0.7], [0.7, 0.7]])
    assert select_mutual_best(tie, tie, mask, 0.0) == [(0, 0)]
    assert select_mutual_best(fwd, rev, np.zeros_like(mask), 0.0) == []


def test_mutual_best_rejects_low_scores():
    e = EmbeddingSpace(["a", "b"], np.array([[1.0, 0.0], [0.0, 1.0]]), "ee")
    f = EmbeddingSpace(["x", "y"], np.array([[1.0, 0.0], [0.0, 1.0]]), "ff")
    model = SimilarityModel(BilingualDictionary(), e, f)
    pair = docpair(["a b"], ["x"])  # fwd = 0.5, rev = 1
    assert mutual_best(pair, MiningConfig(tau=0.6), model) == []
    got = mutual_best(pair, MiningConfig(tau=0.5), model)
    assert len(got) == 1 and got[0].score_fwd == 0.5 and got[0].score_rev == 1.0


def check_against_oracle(pairs, d, e, f, tau, numeric=True):
    model = SimilarityModel(d, e, f)
    cfg = MiningConfig(tau=tau, numeric_filter=numeric)
    ve, vf = vectors(e), vectors(f)
    pset, rset = set(d), set(d.reversed())
    for de, df in pairs:
        e_raw = [s for s in de.sentences if Sentence.from_raw(s, "ee").tokens]
        f_raw = [t for t in df.sentences if Sentence.from_raw(t, "ff").tokens]
        e_tok = [list(Sentence.from_raw(s, "ee").tokens) for s in e_raw]
        f_tok = [list(Sentence.from_raw(t, "ff").tokens) for t in f_raw]
        ref, ref_fwd, ref_rev = oracles.mutual_best(e_tok, f_tok, pset, rset, ve, vf, tau, numeric)
        fwd, rev = score_matrices([Sentence.from_raw(s, "ee") for s in e_raw],
                                  [Sentence.from_raw(t, "ff") for t in f_raw], model)
        for (a, b), v in ref_fwd.items():
            assert abs(fwd[a, b] - v) <= 1e-12
            assert abs(rev[a, b] - ref_rev[(a, b)]) <= 1e-12
        got = mutual_best(DocPair(de, df), cfg, model)
        assert {(p.src.raw, p.tgt.raw) for p in got} == {(e_raw[a], f_raw[b]) for a, b in ref}
        for p in got:
            a, b = e_raw.index(p.src.raw), f_raw.index(p.tgt.raw)
            assert abs(p.score_fwd - ref_fwd[(a, b)]) <= 1e-12
            assert p.min_score >= tau


@given(st.integers(0, 10_000), st.sampled_from([-1.0, 0.0, 0.3, 0.6]), st.booleans())
@settings(max_examples=15, deadline=None)
def test_mining_matches_oracle(seed, tau, numeric):
    rng = np.random.default_rng(seed)
    check_against_oracle(*random_mining_case(rng, n_docs=3, max_sents=12, vocab=40, dim=6), tau, numeric)


@given(st.integers(0, 10_000), st.floats(-1, 1), st.floats(-1, 1))
@settings(max_examples=20, deadline=None)
def test_tau_monotone(seed, t1, t2):
    lo, hi = sorted((t1, t2))
    pairs, d, e, f = random_mining_case(np.random.default_rng(seed), n_docs=3, max_sents=10, vocab=30, dim=4)
    model = SimilarityModel(d, e, f)
    dps = [DocPair(a, b) for a, b in pairs]

    def keys(t):
        return {(p.src_doc, p.src_index, p.tgt_index) for p in mine(dps, MiningConfig(tau=t), model)}

    assert keys(hi) <= keys(lo)


def test_mining_config_validation():
    with pytest.raises(ValueError):
        MiningConfig(tau=float("nan"))
    with pytest.raises(ValueError):
        MiningConfig(tau=-1.5)
    assert MiningConfig().max_length_ratio == 2.0


def _title(s, t, i=0):
    return SeedPair(Sentence.from_raw(s, "ee"), Sentence.from_raw(t, "ff"), SeedKind.TITLE, f"a{i}", f"b{i}")


def test_mine_titles_and_threads(tmp_path):
    fx = make_cipher_fixture(n_docs=30, vocab_size=500, dim=8, seed=5)
    model = SimilarityModel(fx.dictionary, fx.emb_e, fx.emb_f)
    pairs = [DocPair(d, fx.store_f.get(d.links["ff"])) for d in fx.store_e]
    titles = [_title(d.title, fx.store_f.get(d.links["ff"]).title) for d in fx.store_e]
    cfg = MiningConfig(tau=0.9)
    one = mine(pairs, cfg, model, titles, threads=1)
    four = mine(pairs, cfg, model, titles, threads=4)
    one.save(tmp_path / "1.tsv")
    four.save(tmp_path / "4.tsv")
    assert (tmp_path / "1.tsv").read_bytes() == (tmp_path / "4.tsv").read_bytes()
    got = {(p.src_doc, p.tgt_doc, p.src_index, p.tgt_index) for p in one if p.kind == "mined"}
    assert got == fx.planted
    assert one.stats()["titles"] == 30
    keys = [(p.src_doc, p.tgt_doc, p.src_index) for p in one]
    assert keys == sorted(keys)

    assert [p.kind for p in mine([], cfg, model, titles)] == ["title"] * 30
    assert all(p.kind == "mined" for p in mine(pairs, MiningConfig(tau=0.9, include_titles=False), model, titles))
    assert len(mine(pairs, MiningConfig(tau=1.01), model)) == 0

    back = MinedCorpus.load(tmp_path / "1.tsv", "ee", "ff")
    assert [(p.src.raw, p.score_fwd, p.score_rev) for p in back] == [(p.src.raw, p.score_fwd, p.score_rev) for p in one]
