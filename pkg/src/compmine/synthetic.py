"""Planted-cipher comparable corpora for tests, benchmarks and demos.

Two "languages" share one vocabulary under a bijective word cipher.  Each
linked document pair carries some sentences that are exact cipher
translations of each other; the rest are independent random sentences.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .align import BilingualDictionary
from .corpus import Document, DocumentStore
from .xembed import EmbeddingSpace


def _random_words(rng: np.random.Generator, n: int, taken: set[str]) -> list[str]:
    letters = np.array(list(string.ascii_lowercase))
    out = []
    while len(out) < n:
        w = "".join(rng.choice(letters, size=int(rng.integers(4, 9))))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


@dataclass
class CipherFixture:
    store_e: DocumentStore
    store_f: DocumentStore
    cipher: dict[str, str]
    emb_e: EmbeddingSpace
    emb_f: EmbeddingSpace
    # (e doc id, f doc id, e sentence index, f sentence index)
    planted: set[tuple[str, str, int, int]] = field(default_factory=set)

    @property
    def dictionary(self) -> BilingualDictionary:
        return BilingualDictionary({(e, f): "seed" for e, f in sorted(self.cipher.items())})

    def save(self, directory: str | Path) -> dict[str, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {
            "docs_e": d / "docs_e.jsonl",
            "docs_f": d / "docs_f.jsonl",
            "emb_e": d / "emb_e.vec",
            "emb_f": d / "emb_f.vec",
            "cipher": d / "cipher.tsv",
        }
        self.store_e.save(paths["docs_e"])
        self.store_f.save(paths["docs_f"])
        self.emb_e.save(paths["emb_e"])
        self.emb_f.save(paths["emb_f"])
        self.dictionary.save(paths["cipher"])
        return paths


def make_cipher_fixture(
    n_docs: int = 200,
    sentences: tuple[int, int] = (8, 16),
    plant_fraction: float = 0.3,
    vocab_size: int = 3000,
    sentence_length: tuple[int, int] = (5, 15),
    dim: int = 32,
    noise: float = 0.05,
    lang_e: str = "ee",
    lang_f: str = "ff",
    seed: int = 0,
) -> CipherFixture:
    rng = np.random.default_rng(seed)
    taken: set[str] = set()
    e_words = _random_words(rng, vocab_size, taken)
    f_words = _random_words(rng, vocab_size, taken)
    years = [str(y) for y in range(1900, 2021)]
    cipher = dict(zip(e_words, f_words))
    cipher.update({y: y for y in years})
    cipher["."] = "."

    def sentence() -> list[str]:
        n = int(rng.integers(sentence_length[0], sentence_length[1] + 1))
        words = [e_words[i] for i in rng.integers(0, vocab_size, size=n)]
        if rng.random() < 0.2:
            words.insert(int(rng.integers(0, n + 1)), years[int(rng.integers(0, len(years)))])
        return words

    def raw(words: list[str]) -> str:
        return " ".join(words) + " ."

    def translate(words: list[str]) -> list[str]:
        return [cipher[w] for w in words]

    def f_sentence() -> list[str]:
        return translate(sentence())

    docs_e, docs_f, planted = [], [], set()
    for d in range(n_docs):
        e_id, f_id = f"e{d:05d}", f"f{d:05d}"
        n_e = int(rng.integers(sentences[0], sentences[1] + 1))
        n_f = int(rng.integers(sentences[0], sentences[1] + 1))
        n_plant = max(1, int(round(plant_fraction * min(n_e, n_f))))
        e_sents = [sentence() for _ in range(n_e)]
        # first sentences are always planted; the rest go to random slots
        e_slots = [0] + sorted(rng.choice(np.arange(1, n_e), size=n_plant - 1, replace=False).tolist())
        f_slots = [0] + sorted(rng.choice(np.arange(1, n_f), size=n_plant - 1, replace=False).tolist())
        perm = rng.permutation(n_plant - 1).tolist()
        f_sents: list[list[str] | None] = [None] * n_f
        f_sents[0] = translate(e_sents[0])
        planted.add((e_id, f_id, 0, 0))
        for k, src_slot in enumerate(e_slots[1:]):
            dst = f_slots[1:][perm[k]]
            f_sents[dst] = translate(e_sents[src_slot])
            planted.add((e_id, f_id, src_slot, dst))
        f_sents = [s if s is not None else f_sentence() for s in f_sents]

        title = [e_words[i] for i in rng.integers(0, vocab_size, size=int(rng.integers(1, 4)))]
        images_e, images_f = [], []
        if rng.random() < 0.5:
            caption = sentence()
            image_id = f"img{d:05d}.jpg"
            images_e.append((image_id, raw(caption)))
            images_f.append((image_id, raw(translate(caption))))
        docs_e.append(Document(e_id, lang_e, " ".join(title), tuple(raw(s) for s in e_sents),
                               tuple(images_e), {lang_f: f_id}))
        docs_f.append(Document(f_id, lang_f, " ".join(translate(title)), tuple(raw(s) for s in f_sents),
                               tuple(images_f), {lang_e: e_id}))

    vocab_e = e_words + years + ["."]
    base = rng.standard_normal((len(vocab_e), dim))
    rotation, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    f_vecs = base @ rotation + noise * rng.standard_normal(base.shape)
    emb_e = EmbeddingSpace(vocab_e, base, lang_e)
    emb_f = EmbeddingSpace([cipher[w] for w in vocab_e], f_vecs, lang_f)
    return CipherFixture(DocumentStore(docs_e), DocumentStore(docs_f), cipher, emb_e, emb_f, planted)
