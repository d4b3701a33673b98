"""Seed parallel data from linked documents: first sentences, titles, captions."""

from __future__ import annotations

import enum
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .corpus import DocPair, DocumentStore, Sentence, length_ratio_ok
from .errors import DataError

log = logging.getLogger(__name__)


class SeedKind(str, enum.Enum):
    FIRST_SENTENCE = "FirstSentence"
    CAPTION = "Caption"
    TITLE = "Title"


@dataclass(frozen=True)
class SeedPair:
    src: Sentence
    tgt: Sentence
    kind: SeedKind
    src_doc: str
    tgt_doc: str
    image_id: str | None = None

    def __post_init__(self):
        if self.kind is SeedKind.CAPTION and not self.image_id:
            raise DataError("caption pairs need an image id")
        if self.src.lang == self.tgt.lang:
            raise DataError(f"seed pair sides share the language {self.src.lang!r}")


@dataclass
class SeedCorpus:
    pairs: list[SeedPair] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        c = Counter(p.kind.value for p in self.pairs)
        return {k.value: c.get(k.value, 0) for k in SeedKind}

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def of_kind(self, kind: SeedKind) -> list[SeedPair]:
        return [p for p in self.pairs if p.kind is kind]

    def sentence_pairs(self) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
        return [(p.src.tokens, p.tgt.tokens) for p in self.pairs]

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for p in self.pairs:
                row = [p.kind.value, p.src_doc, p.tgt_doc, p.image_id or "", p.src.raw, p.tgt.raw]
                fh.write("\t".join(row) + "\n")

    @classmethod
    def load(cls, path: str | Path, src_lang: str, tgt_lang: str) -> SeedCorpus:
        pairs = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                cols = line.split("\t")
                if len(cols) != 6:
                    raise DataError(f"{path}:{lineno}: expected 6 columns, got {len(cols)}")
                kind, src_doc, tgt_doc, image_id, src_raw, tgt_raw = cols
                try:
                    k = SeedKind(kind)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: unknown pair kind {kind!r}") from None
                pairs.append(SeedPair(
                    Sentence.from_raw(src_raw, src_lang),
                    Sentence.from_raw(tgt_raw, tgt_lang),
                    k, src_doc, tgt_doc, image_id or None,
                ))
        return cls(pairs)


def linked_pairs(store_e: DocumentStore, store_f: DocumentStore) -> list[DocPair]:
    """All (e, f) document pairs where the e document links to an existing f document."""
    if store_e.lang is not None and store_e.lang == store_f.lang:
        raise DataError(f"both stores have language {store_e.lang!r}")
    pairs = []
    for doc in store_e:
        target = doc.links.get(store_f.lang or "")
        if target is None:
            continue
        other = store_f.get(target)
        if other is None:
            log.warning("document %s links to missing %s:%s", doc.doc_id, store_f.lang, target)
            continue
        pairs.append(DocPair(doc, other))
    pairs.sort(key=lambda p: (p.src_doc.doc_id, p.tgt_doc.doc_id))
    return pairs


def extract_first_sentences(pairs: Iterable[DocPair]) -> list[SeedPair]:
    out = []
    for pair in pairs:
        s = Sentence.from_raw(pair.src_doc.first_sentence, pair.src_doc.lang)
        t = Sentence.from_raw(pair.tgt_doc.first_sentence, pair.tgt_doc.lang)
        if not s.tokens or not t.tokens:
            continue
        if length_ratio_ok(len(s), len(t)):
            out.append(SeedPair(s, t, SeedKind.FIRST_SENTENCE, pair.src_doc.doc_id, pair.tgt_doc.doc_id))
    return out


def extract_titles(pairs: Iterable[DocPair]) -> list[SeedPair]:
    out = []
    for pair in pairs:
        s = Sentence.from_raw(pair.src_doc.title, pair.src_doc.lang)
        t = Sentence.from_raw(pair.tgt_doc.title, pair.tgt_doc.lang)
        if s.tokens and t.tokens:
            out.append(SeedPair(s, t, SeedKind.TITLE, pair.src_doc.doc_id, pair.tgt_doc.doc_id))
    return out


def _captions_by_image(store: DocumentStore) -> dict[str, list[tuple[str, Sentence]]]:
    by_image: dict[str, list[tuple[str, Sentence]]] = {}
    for doc in store:
        for image_id, caption in doc.images:
            sent = Sentence.from_raw(caption, doc.lang)
            if sent.tokens:
                by_image.setdefault(image_id, []).append((doc.doc_id, sent))
    return by_image


def extract_captions(store_e: DocumentStore, store_f: DocumentStore) -> list[SeedPair]:
    """Cross product of e and f captions sharing an image id, length-filtered.

    Document links are not consulted; the shared image is the only evidence.
    """
    caps_e = _captions_by_image(store_e)
    caps_f = _captions_by_image(store_f)
    out = []
    for image_id in sorted(caps_e.keys() & caps_f.keys()):
        for doc_e, s in caps_e[image_id]:
            for doc_f, t in caps_f[image_id]:
                if length_ratio_ok(len(s), len(t)):
                    out.append(SeedPair(s, t, SeedKind.CAPTION, doc_e, doc_f, image_id))
    return out


def build_seed(first: Iterable[SeedPair], captions: Iterable[SeedPair], titles: Iterable[SeedPair]) -> SeedCorpus:
    """Union of the three sources, deduplicated on raw strings; earlier sources win."""
    seen: set[tuple[str, str]] = set()
    pairs = []
    for group in (first, captions, titles):
        for p in group:
            key = (p.src.raw, p.tgt.raw)
            if key in seen:
                continue
            seen.add(key)
            pairs.append(p)
    return SeedCorpus(pairs)


def extract_seed(store_e: DocumentStore, store_f: DocumentStore) -> tuple[SeedCorpus, list[DocPair]]:
    pairs = linked_pairs(store_e, store_f)
    corpus = build_seed(extract_first_sentences(pairs), extract_captions(store_e, store_f), extract_titles(pairs))
    return corpus, pairs
