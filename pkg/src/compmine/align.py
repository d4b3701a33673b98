"""IBM Model 1 word alignment, intersection symmetrization and dictionary induction."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

NULL = "<NULL>"
DEFAULT_ITERATIONS = 5
# Sentences per E-step work unit.  Fixed so that the reduction order, and
# therefore every float in the table, does not depend on the worker count.
CHUNK_SENTENCES = 2048

SEED = "seed"
RELATED = "related-language"

SentencePair = tuple[Sequence[str], Sequence[str]]


@dataclass(frozen=True)
class TranslationTable:
    """Lexical probabilities t(tgt | src); ``NULL`` is a source token.

    ``floor`` is the probability of any pair not stored explicitly: 1/|V_tgt|
    in the uniform initial state, 0 afterwards.
    """

    probs: dict[str, dict[str, float]]
    tgt_vocab: frozenset[str]
    direction: str = "e->f"
    iterations: int = 0
    floor: float = 0.0

    def prob(self, src: str, tgt: str) -> float:
        if tgt not in self.tgt_vocab:
            return 0.0
        row = self.probs.get(src)
        if row is None:
            return 0.0
        return row.get(tgt, self.floor)

    def row_sum(self, src: str) -> float:
        row = self.probs.get(src, {})
        return math.fsum(row.values()) + self.floor * (len(self.tgt_vocab) - len(row))

    @property
    def src_vocab(self) -> list[str]:
        return list(self.probs)

    def best(self, src: str) -> str | None:
        row = self.probs.get(src)
        if not row:
            return None
        return min(row, key=lambda t: (-row[t], t))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# direction={self.direction} iterations={self.iterations}\n")
            for src in sorted(self.probs):
                row = self.probs[src]
                for tgt in sorted(row):
                    fh.write(f"{src}\t{tgt}\t{row[tgt]!r}\n")

    @classmethod
    def load(cls, path: str | Path) -> TranslationTable:
        probs: dict[str, dict[str, float]] = {}
        direction, iterations = "e->f", 0
        vocab = set()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line.startswith("#"):
                    meta = dict(kv.split("=", 1) for kv in line[1:].split())
                    direction = meta.get("direction", direction)
                    iterations = int(meta.get("iterations", iterations))
                    continue
                src, tgt, p = line.split("\t")
                probs.setdefault(src, {})[tgt] = float(p)
                vocab.add(tgt)
        return cls(probs, frozenset(vocab), direction, iterations)


class _CompiledCorpus:
    """Integer-indexed view of a corpus for vectorized EM."""

    def __init__(self, corpus: Sequence[SentencePair]):
        if not corpus:
            raise DataError("cannot train an aligner on an empty corpus")
        for n, (src, tgt) in enumerate(corpus):
            if not src or not tgt:
                raise DataError(f"sentence pair {n} has an empty side")
        src_types = sorted({w for s, _ in corpus for w in s} - {NULL})
        self.src_vocab = [NULL] + src_types
        self.tgt_vocab = sorted({w for _, t in corpus for w in t})
        s_index = {w: i for i, w in enumerate(self.src_vocab)}
        t_index = {w: i for i, w in enumerate(self.tgt_vocab)}
        n_tgt = len(self.tgt_vocab)

        raw_chunks = []
        for start in range(0, len(corpus), CHUNK_SENTENCES):
            keys, toks, lens = [], [], []
            tok_offset = 0
            for src, tgt in corpus[start:start + CHUNK_SENTENCES]:
                sid = np.array([0] + [s_index[w] for w in src], dtype=np.int64)
                tid = np.array([t_index[w] for w in tgt], dtype=np.int64)
                # instance (i, j) for every source position i (incl. NULL) and target j
                keys.append((sid[None, :] * n_tgt + tid[:, None]).ravel())
                toks.append(np.repeat(np.arange(tok_offset, tok_offset + len(tid)), len(sid)))
                lens.append(np.full(len(tid), len(sid), dtype=np.float64))
                tok_offset += len(tid)
            raw_chunks.append((np.concatenate(keys), np.concatenate(toks), np.concatenate(lens)))

        all_keys = np.unique(np.concatenate([c[0] for c in raw_chunks]))
        self.pair_src = all_keys // n_tgt
        self.pair_tgt = all_keys % n_tgt
        self.chunks = [
            (np.searchsorted(all_keys, keys), toks, lens) for keys, toks, lens in raw_chunks
        ]

    @property
    def n_pairs(self) -> int:
        return len(self.pair_src)


def _estep(chunk, t: np.ndarray, n_pairs: int) -> tuple[np.ndarray, float]:
    inst_pair, inst_tok, tok_len = chunk
    p = t[inst_pair]
    denom = np.bincount(inst_tok, weights=p, minlength=len(tok_len))
    post = p / denom[inst_tok]
    counts = np.bincount(inst_pair, weights=post, minlength=n_pairs)
    loglik = float(np.sum(np.log(denom / tok_len)))
    return counts, loglik


class Model1:
    """EM trainer for IBM Model 1 over a fixed corpus."""

    def __init__(self, corpus: Sequence[SentencePair], direction: str = "e->f", threads: int = 1):
        self.corpus = list(corpus)
        self.direction = direction
        self.threads = max(1, int(threads))
        self._c = _CompiledCorpus(self.corpus)
        self.t = np.full(self._c.n_pairs, 1.0 / len(self._c.tgt_vocab))
        self.iterations = 0

    def _expected_counts(self) -> tuple[np.ndarray, float]:
        n = self._c.n_pairs
        if self.threads > 1 and len(self._c.chunks) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                results = list(pool.map(lambda ch: _estep(ch, self.t, n), self._c.chunks))
        else:
            results = [_estep(ch, self.t, n) for ch in self._c.chunks]
        counts = np.zeros(n)
        loglik = 0.0
        for c, ll in results:
            counts += c
            loglik += ll
        return counts, loglik

    def log_likelihood(self) -> float:
        """Corpus log-likelihood under the current parameters (length term omitted)."""
        return self._expected_counts()[1]

    def step(self) -> float:
        """One EM iteration; returns the log-likelihood of the parameters before the update."""
        counts, loglik = self._expected_counts()
        totals = np.bincount(self._c.pair_src, weights=counts, minlength=len(self._c.src_vocab))
        self.t = counts / totals[self._c.pair_src]
        self.iterations += 1
        return loglik

    def table(self) -> TranslationTable:
        probs: dict[str, dict[str, float]] = {}
        sv, tv = self._c.src_vocab, self._c.tgt_vocab
        floor = 1.0 / len(tv) if self.iterations == 0 else 0.0
        for s, tg, p in zip(self._c.pair_src.tolist(), self._c.pair_tgt.tolist(), self.t.tolist()):
            probs.setdefault(sv[s], {})[tv[tg]] = p
        return TranslationTable(probs, frozenset(tv), self.direction, self.iterations, floor)


def train_model1(
    corpus: Sequence[SentencePair],
    iterations: int = DEFAULT_ITERATIONS,
    direction: str = "e->f",
    threads: int = 1,
) -> TranslationTable:
    """Train t(tgt | src) by EM from the uniform initialization."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    model = Model1(corpus, direction, threads)
    for _ in range(iterations):
        ll = model.step()
        log.debug("model1 %s iteration %d loglik %.6f", direction, model.iterations, ll)
    return model.table()


@dataclass(frozen=True)
class Alignment:
    """Word links (i, j), 1-based: i indexes source tokens, j target tokens."""

    links: frozenset[tuple[int, int]]
    len_src: int
    len_tgt: int

    def __post_init__(self):
        object.__setattr__(self, "links", frozenset(self.links))
        for i, j in self.links:
            if not (1 <= i <= self.len_src and 1 <= j <= self.len_tgt):
                raise DataError(f"link {i}-{j} out of range for lengths {self.len_src}x{self.len_tgt}")

    def __len__(self) -> int:
        return len(self.links)

    def reversed(self) -> Alignment:
        return Alignment(frozenset((j, i) for i, j in self.links), self.len_tgt, self.len_src)

    def is_one_to_one(self) -> bool:
        src = [i for i, _ in self.links]
        tgt = [j for _, j in self.links]
        return len(set(src)) == len(src) and len(set(tgt)) == len(tgt)

    def src_to_tgt(self) -> dict[int, int]:
        if not self.is_one_to_one():
            raise DataError("alignment is not one-to-one")
        return dict(self.links)

    def to_pharaoh(self) -> str:
        return " ".join(f"{i - 1}-{j - 1}" for i, j in sorted(self.links))

    @classmethod
    def from_pharaoh(cls, line: str, len_src: int, len_tgt: int) -> Alignment:
        links = set()
        for item in line.split():
            try:
                a, b = item.split("-")
                links.add((int(a) + 1, int(b) + 1))
            except ValueError:
                raise DataError(f"bad alignment link {item!r}") from None
        return cls(frozenset(links), len_src, len_tgt)


def viterbi_align(table: TranslationTable, pair: SentencePair) -> Alignment:
    """Link each target token to its most probable source token; NULL wins ties."""
    src, tgt = pair
    links = set()
    for j, w in enumerate(tgt, 1):
        if w not in table.tgt_vocab:
            continue
        best_i, best_p = 0, table.prob(NULL, w)
        for i, s in enumerate(src, 1):
            p = table.prob(s, w)
            if p > best_p:
                best_i, best_p = i, p
        if best_i:
            links.add((best_i, j))
    return Alignment(frozenset(links), len(src), len(tgt))


def intersect(fwd: Alignment, rev: Alignment) -> Alignment:
    """Links present in both directions; ``rev`` is indexed (tgt, src)."""
    if fwd.len_src != rev.len_tgt or fwd.len_tgt != rev.len_src:
        raise DataError(
            f"alignment lengths disagree: fwd {fwd.len_src}x{fwd.len_tgt}, rev {rev.len_src}x{rev.len_tgt}"
        )
    out = Alignment(fwd.links & rev.reversed().links, fwd.len_src, fwd.len_tgt)
    if not out.is_one_to_one():
        raise DataError("intersected alignment is not one-to-one")
    return out


@dataclass
class BilingualDictionary:
    """Set of (src, tgt) word pairs, each tagged with where it came from."""

    entries: dict[tuple[str, str], str] = field(default_factory=dict)

    def __contains__(self, pair: tuple[str, str]) -> bool:
        return pair in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[str, str]]:
        return iter(sorted(self.entries))

    def translations(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = defaultdict(set)
        for s, t in self.entries:
            out[s].add(t)
        return dict(out)

    def reversed(self) -> BilingualDictionary:
        return BilingualDictionary({(t, s): prov for (s, t), prov in self.entries.items()})

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for (s, t) in sorted(self.entries):
                fh.write(f"{s}\t{t}\t{self.entries[(s, t)]}\n")

    @classmethod
    def load(cls, path: str | Path) -> BilingualDictionary:
        entries = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                cols = line.split("\t")
                if len(cols) == 2:
                    cols.append(SEED)
                if len(cols) != 3:
                    raise DataError(f"{path}:{lineno}: expected src, tgt, provenance")
                entries[(cols[0], cols[1])] = cols[2]
        return cls(entries)


def link_counts(
    corpus: Iterable[SentencePair], fwd_table: TranslationTable, rev_table: TranslationTable
) -> dict[tuple[str, str], int]:
    """Count intersected (src word, tgt word) links over a corpus."""
    counts: dict[tuple[str, str], int] = defaultdict(int)
    for src, tgt in corpus:
        fwd = viterbi_align(fwd_table, (src, tgt))
        rev = viterbi_align(rev_table, (tgt, src))
        for i, j in intersect(fwd, rev).links:
            counts[(src[i - 1], tgt[j - 1])] += 1
    return counts


def dictionary_from_counts(
    counts: dict[tuple[str, str], int], min_count: int = 1, provenance: str = SEED
) -> BilingualDictionary:
    """Most frequent target per source word; ties go to the smallest target string."""
    by_src: dict[str, dict[str, int]] = defaultdict(dict)
    for (s, t), c in counts.items():
        by_src[s][t] = c
    entries = {}
    for s, row in by_src.items():
        if sum(row.values()) < min_count:
            continue
        best = min(row, key=lambda t: (-row[t], t))
        entries[(s, best)] = provenance
    return BilingualDictionary(entries)


def extract_dictionary(
    corpus: Sequence[SentencePair],
    fwd_table: TranslationTable,
    rev_table: TranslationTable,
    min_count: int = 1,
    provenance: str = SEED,
) -> BilingualDictionary:
    if not corpus:
        raise DataError("cannot extract a dictionary from an empty corpus")
    return dictionary_from_counts(link_counts(corpus, fwd_table, rev_table), min_count, provenance)


def merge_dictionaries(d_fe: BilingualDictionary, d_ge: BilingualDictionary) -> BilingualDictionary:
    """Union of entries; a pair present in both keeps the seed provenance."""
    merged = dict(d_ge.entries)
    for pair, prov in d_fe.entries.items():
        other = merged.get(pair)
        merged[pair] = SEED if SEED in (prov, other) else prov
    return BilingualDictionary(dict(sorted(merged.items())))


def learn_dictionary(
    corpus: Sequence[SentencePair],
    iterations: int = DEFAULT_ITERATIONS,
    min_count: int = 1,
    provenance: str = SEED,
    threads: int = 1,
) -> tuple[BilingualDictionary, TranslationTable, TranslationTable]:
    """Align both directions, intersect and pick the most frequent link per source word."""
    corpus = [(tuple(s), tuple(t)) for s, t in corpus]
    fwd = train_model1(corpus, iterations, "e->f", threads)
    rev = train_model1([(t, s) for s, t in corpus], iterations, "f->e", threads)
    return extract_dictionary(corpus, fwd, rev, min_count, provenance), fwd, rev


def read_pharaoh(path: str | Path, lengths: Sequence[tuple[int, int]]) -> list[Alignment]:
    out = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) != len(lengths):
        raise DataError(f"{path}: {len(lines)} alignment lines for {len(lengths)} sentence pairs")
    for line, (ls, lt) in zip(lines, lengths):
        out.append(Alignment.from_pharaoh(line, ls, lt))
    return out


def write_pharaoh(alignments: Iterable[Alignment], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for a in alignments:
            fh.write(a.to_pharaoh() + "\n")
