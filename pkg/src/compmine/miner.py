"""Dictionary-boosted similarity scoring and mutual-best bitext selection."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .align import BilingualDictionary
from .corpus import DocPair, Sentence, length_ratio_ok, numeric_signature
from .errors import DataError
from .seed import SeedPair
from .xembed import EmbeddingSpace

log = logging.getLogger(__name__)

DEFAULT_TAU = 0.5


@dataclass(frozen=True)
class MiningConfig:
    tau: float = DEFAULT_TAU
    numeric_filter: bool = True
    include_titles: bool = True
    max_length_ratio: float = field(default=2.0, init=False)

    def __post_init__(self):
        # Values above 1 are allowed and simply accept nothing.
        if not math.isfinite(self.tau) or self.tau < -1:
            raise ValueError(f"tau must be a finite number >= -1, got {self.tau}")


@dataclass(frozen=True)
class MinedPair:
    src: Sentence
    tgt: Sentence
    score_fwd: float
    score_rev: float
    src_doc: str
    tgt_doc: str
    src_index: int = -1
    tgt_index: int = -1
    kind: str = "mined"

    @property
    def min_score(self) -> float:
        return min(self.score_fwd, self.score_rev)


class SimilarityModel:
    """Word similarity: 1.0 for dictionary pairs, else cosine of projected vectors.

    The e side is the scoring source in the forward direction; the reverse
    direction swaps roles and consults ``rev_dictionary`` (by default the
    forward dictionary with every pair flipped).
    """

    def __init__(
        self,
        dictionary: BilingualDictionary,
        space_e: EmbeddingSpace,
        space_f: EmbeddingSpace,
        rev_dictionary: BilingualDictionary | None = None,
    ):
        if space_e.dim != space_f.dim:
            raise DataError(f"projected spaces differ in dimension ({space_e.dim} vs {space_f.dim})")
        self.dictionary = dictionary
        self.rev_dictionary = rev_dictionary if rev_dictionary is not None else dictionary.reversed()
        self.space_e = space_e
        self.space_f = space_f
        # Word ids: embedding rows first, then dictionary-only words, then one
        # shared id for unknown words.  Rows without a vector are zero.
        self._ids_e = self._vocab(space_e, [s for s, _ in dictionary.entries] + [t for _, t in self.rev_dictionary.entries])
        self._ids_f = self._vocab(space_f, [t for _, t in dictionary.entries] + [s for s, _ in self.rev_dictionary.entries])
        self._unk_e, self._unk_f = len(self._ids_e), len(self._ids_f)
        self._unit_e = self._normalize(space_e.vectors, self._unk_e + 1)
        self._unit_f = self._normalize(space_f.vectors, self._unk_f + 1)
        self._fwd = self._adjacency(
            [(self._ids_e[s], self._ids_f[t]) for s, t in dictionary.entries], self._unk_e + 1)
        self._rev = self._adjacency(
            [(self._ids_f[s], self._ids_e[t]) for s, t in self.rev_dictionary.entries], self._unk_f + 1)

    @staticmethod
    def _vocab(space: EmbeddingSpace, extra: Iterable[str]) -> dict[str, int]:
        ids = dict(space.index)
        for w in extra:
            if w not in ids:
                ids[w] = len(ids)
        return ids

    @staticmethod
    def _normalize(m: np.ndarray, rows: int) -> np.ndarray:
        out = np.zeros((rows, m.shape[1]))
        norms = np.linalg.norm(m, axis=1, keepdims=True)
        np.divide(m, norms, out=out[: m.shape[0]], where=norms > 0)
        return out

    @staticmethod
    def _adjacency(pairs: list[tuple[int, int]], n_rows: int) -> tuple[np.ndarray, np.ndarray]:
        """CSR (indptr, indices) of the dictionary over word ids."""
        arr = np.array(sorted(set(pairs)), dtype=np.int64).reshape(-1, 2)
        indptr = np.searchsorted(arr[:, 0], np.arange(n_rows + 1))
        return indptr, arr[:, 1].copy()

    @staticmethod
    def _overlay(sim: np.ndarray, rows: np.ndarray, cols: np.ndarray, adj: tuple[np.ndarray, np.ndarray]) -> None:
        """Set sim[a, b] = 1 wherever (rows[a], cols[b]) is a dictionary pair."""
        indptr, indices = adj
        starts, ends = indptr[rows], indptr[rows + 1]
        counts = ends - starts
        total = int(counts.sum())
        if total == 0:
            return
        owner = np.repeat(np.arange(len(rows)), counts)
        flat = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts) + np.repeat(starts, counts)
        targets = indices[flat]
        order = np.argsort(cols, kind="stable")
        sorted_cols = cols[order]
        pos = np.minimum(np.searchsorted(sorted_cols, targets), len(cols) - 1)
        ok = sorted_cols[pos] == targets
        sim[owner[ok], order[pos[ok]]] = 1.0

    def type_matrix(self, e_types: Sequence[str], f_types: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Forward (e x f) and reverse (f x e) similarity matrices over word types."""
        ie = np.array([self._ids_e.get(w, self._unk_e) for w in e_types], dtype=np.int64)
        jf = np.array([self._ids_f.get(w, self._unk_f) for w in f_types], dtype=np.int64)
        fwd = self._unit_e[ie] @ self._unit_f[jf].T
        rev = fwd.T.copy()
        self._overlay(fwd, ie, jf, self._fwd)
        self._overlay(rev, jf, ie, self._rev)
        return fwd, rev


def word_sim(s_tok: str, t_tok: str, model: SimilarityModel, reverse: bool = False) -> float:
    """sim(s, t); with ``reverse`` the first token is an f word scored against an e word."""
    if reverse:
        return float(model.type_matrix([t_tok], [s_tok])[1][0, 0])
    return float(model.type_matrix([s_tok], [t_tok])[0][0, 0])


class _Side:
    """Token-id layout of a list of sentences over a shared type inventory."""

    def __init__(self, sentences: Sequence[Sentence]):
        types: dict[str, int] = {}
        ids: list[int] = []
        lengths = []
        for sent in sentences:
            for tok in sent.tokens:
                ids.append(types.setdefault(tok, len(types)))
            lengths.append(len(sent.tokens))
        self.types = list(types)
        self.ids = np.array(ids, dtype=np.int64)
        self.lengths = np.array(lengths, dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.lengths)[:-1]]).astype(np.int64)


def _avg_max(type_sim: np.ndarray, src: _Side, tgt: _Side) -> np.ndarray:
    """Average over source tokens of the max over target tokens: (n_src_sents x n_tgt_sents)."""
    best = np.maximum.reduceat(type_sim[:, tgt.ids], tgt.offsets, axis=1)
    return np.add.reduceat(best[src.ids], src.offsets, axis=0) / src.lengths[:, None]


def score_matrices(
    e_sents: Sequence[Sentence], f_sents: Sequence[Sentence], model: SimilarityModel
) -> tuple[np.ndarray, np.ndarray]:
    """All-pairs (score_fwd, score_rev), both indexed [e sentence, f sentence]."""
    if any(not s.tokens for s in e_sents) or any(not t.tokens for t in f_sents):
        raise DataError("cannot score an empty sentence")
    es, fs = _Side(e_sents), _Side(f_sents)
    fwd, rev = model.type_matrix(es.types, fs.types)
    return _avg_max(fwd, es, fs), _avg_max(rev, fs, es).T


def sentence_score(s: Sentence | Sequence[str], t: Sentence | Sequence[str], model: SimilarityModel,
                   reverse: bool = False) -> float:
    """Mean over tokens of ``s`` of the best similarity against any token of ``t``.

    With ``reverse`` ``s`` is an f sentence scored against the e sentence ``t``.
    """
    s = s if isinstance(s, Sentence) else Sentence(" ".join(s), tuple(s), "")
    t = t if isinstance(t, Sentence) else Sentence(" ".join(t), tuple(t), "")
    if not s.tokens:
        raise DataError("cannot score an empty source sentence")
    if not t.tokens:
        raise DataError("cannot score against an empty target sentence")
    if reverse:
        return float(score_matrices([t], [s], model)[1][0, 0])
    return float(score_matrices([s], [t], model)[0][0, 0])


def _doc_sentences(doc) -> list[tuple[int, Sentence]]:
    out = []
    for i, raw in enumerate(doc.sentences):
        sent = Sentence.from_raw(raw, doc.lang)
        if sent.tokens:
            out.append((i, sent))
    return out


def _candidate_mask(e_sents: Sequence[Sentence], f_sents: Sequence[Sentence], cfg: MiningConfig) -> np.ndarray:
    le = np.array([len(s) for s in e_sents])[:, None]
    lf = np.array([len(t) for t in f_sents])[None, :]
    # integer form of length_ratio_ok: lf >= ceil(le / 2) and lf <= 2 * le
    mask = (lf >= (le + 1) // 2) & (lf <= 2 * le)
    if cfg.numeric_filter:
        ke = [tuple(sorted(numeric_signature(s.tokens).items())) for s in e_sents]
        kf = [tuple(sorted(numeric_signature(t.tokens).items())) for t in f_sents]
        codes: dict[tuple, int] = {}
        ce = np.array([codes.setdefault(k, len(codes)) for k in ke])[:, None]
        cf = np.array([codes.setdefault(k, len(codes)) for k in kf])[None, :]
        mask &= ce == cf
    return mask


def candidates(pair: DocPair, cfg: MiningConfig = MiningConfig()) -> list[tuple[Sentence, Sentence]]:
    """Length- and number-compatible sentence pairs of a linked document pair."""
    es = _doc_sentences(pair.src_doc)
    fs = _doc_sentences(pair.tgt_doc)
    out = []
    for i, s in es:
        for j, t in fs:
            if not length_ratio_ok(len(s), len(t)):
                continue
            if cfg.numeric_filter and numeric_signature(s.tokens) != numeric_signature(t.tokens):
                continue
            out.append((s, t))
    return out


def select_mutual_best(fwd: np.ndarray, rev: np.ndarray, mask: np.ndarray, tau: float) -> list[tuple[int, int]]:
    """Indices (a, b) that are each other's best candidate with min score >= tau.

    Argmax ties resolve to the lowest index.  At most one pair per sentence is
    kept, greedily by descending min score.
    """
    if not mask.any():
        return []
    f = np.where(mask, fwd, -np.inf)
    r = np.where(mask, rev, -np.inf)
    best_f = np.argmax(f, axis=1)
    best_e = np.argmax(r, axis=0)
    chosen = []
    for a, b in enumerate(best_f.tolist()):
        if not mask[a, b] or best_e[b] != a:
            continue
        m = min(fwd[a, b], rev[a, b])
        if m >= tau:
            chosen.append((-m, a, b))
    chosen.sort()
    used_a, used_b, out = set(), set(), []
    for _, a, b in chosen:
        if a in used_a or b in used_b:
            continue
        used_a.add(a)
        used_b.add(b)
        out.append((a, b))
    return sorted(out)


def mutual_best(pair: DocPair, cfg: MiningConfig, model: SimilarityModel) -> list[MinedPair]:
    es = _doc_sentences(pair.src_doc)
    fs = _doc_sentences(pair.tgt_doc)
    if not es or not fs:
        return []
    e_sents = [s for _, s in es]
    f_sents = [t for _, t in fs]
    mask = _candidate_mask(e_sents, f_sents, cfg)
    if not mask.any():
        return []
    fwd, rev = score_matrices(e_sents, f_sents, model)
    out = []
    for a, b in select_mutual_best(fwd, rev, mask, cfg.tau):
        out.append(MinedPair(
            e_sents[a], f_sents[b], float(fwd[a, b]), float(rev[a, b]),
            pair.src_doc.doc_id, pair.tgt_doc.doc_id, es[a][0], fs[b][0],
        ))
    return out


@dataclass
class MinedCorpus:
    pairs: list[MinedPair] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def stats(self) -> dict:
        mined = [p for p in self.pairs if p.kind == "mined"]
        return {
            "pairs": len(self.pairs),
            "mined": len(mined),
            "titles": len(self.pairs) - len(mined),
            "mean_score": math.fsum(p.min_score for p in mined) / len(mined) if mined else None,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for p in self.pairs:
                fh.write(f"{p.src.raw}\t{p.tgt.raw}\t{p.score_fwd!r}\t{p.score_rev!r}\t{p.src_doc}\t{p.tgt_doc}\n")

    @classmethod
    def load(cls, path: str | Path, src_lang: str = "", tgt_lang: str = "") -> MinedCorpus:
        pairs = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                cols = line.rstrip("\n").split("\t")
                if cols == [""]:
                    continue
                if len(cols) != 6:
                    raise DataError(f"{path}:{lineno}: expected 6 columns, got {len(cols)}")
                pairs.append(MinedPair(
                    Sentence.from_raw(cols[0], src_lang), Sentence.from_raw(cols[1], tgt_lang),
                    float(cols[2]), float(cols[3]), cols[4], cols[5],
                ))
        return cls(pairs)


def _title_pair(title: SeedPair, model: SimilarityModel) -> MinedPair:
    fwd, rev = score_matrices([title.src], [title.tgt], model)
    return MinedPair(title.src, title.tgt, float(fwd[0, 0]), float(rev[0, 0]),
                     title.src_doc, title.tgt_doc, kind="title")


def mine(
    docpairs: Iterable[DocPair],
    cfg: MiningConfig,
    model: SimilarityModel,
    titles: Iterable[SeedPair] = (),
    threads: int = 1,
) -> MinedCorpus:
    """Mutual-best pairs over all linked documents, plus title pairs."""
    docpairs = list(docpairs)
    if threads > 1 and len(docpairs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda p: mutual_best(p, cfg, model), docpairs))
    else:
        results = [mutual_best(p, cfg, model) for p in docpairs]
    pairs = [p for chunk in results for p in chunk]
    if cfg.include_titles:
        pairs.extend(_title_pair(t, model) for t in titles)
    pairs.sort(key=lambda p: (p.src_doc, p.tgt_doc, p.src_index, p.tgt_index))
    return MinedCorpus(pairs)
