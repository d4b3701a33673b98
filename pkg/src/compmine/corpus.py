"""Document model, tokenization and the cheap sentence-pair filters."""

from __future__ import annotations

import json
import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import DataError

# Hard upper bound on the token-length ratio of a candidate pair.
MAX_LENGTH_RATIO = 2


@lru_cache(maxsize=65536)
def _char_class(ch: str) -> int:
    """0 = whitespace, 1 = word character (letter, mark, digit), 2 = other."""
    if ch.isspace():
        return 0
    cat = unicodedata.category(ch)
    # Cf keeps zero-width joiners inside words (Persian, Indic scripts).
    if cat[0] in "LMN" or cat == "Cf":
        return 1
    if cat[0] in "ZC":
        return 0
    return 2


@lru_cache(maxsize=65536)
def _fold_char(ch: str) -> str:
    # Simple (1:1) case folding: only accept single-codepoint mappings.
    folded = ch.casefold()
    if len(folded) == 1:
        return folded
    lowered = ch.lower()
    return lowered if len(lowered) == 1 else ch


def _fold(token: str) -> str:
    if token.isascii():
        return token.lower()
    return "".join(_fold_char(c) for c in token)


_ASCII_TOKEN_RE = re.compile(r"[^\W_]+|\S", re.ASCII)

# Planes holding every combining mark and format character.
_MARK_PLANES = ((0x0000, 0x20000), (0xE0000, 0xE1000))


@lru_cache(maxsize=1)
def _token_re() -> re.Pattern:
    # \w without "_" covers letters and digits; marks and Cf must be added.
    ranges = []
    for lo, hi in _MARK_PLANES:
        start = None
        for cp in range(lo, hi):
            cat = unicodedata.category(chr(cp))
            inside = cat[0] == "M" or cat == "Cf"
            if inside and start is None:
                start = cp
            elif not inside and start is not None:
                ranges.append((start, cp - 1))
                start = None
        if start is not None:
            ranges.append((start, hi - 1))
    extra = "".join(f"\\U{a:08x}-\\U{b:08x}" for a, b in ranges)
    return re.compile(f"(?:[^\\W_]|[{extra}])+|\\S")


def tokenize(raw: str, lang: str = "") -> list[str]:
    """Split ``raw`` into lowercased word tokens.

    Runs of letters, combining marks and digits form one token; every other
    non-space codepoint is a token of its own.  ``lang`` is accepted for
    interface symmetry; the rule is language independent.
    """
    if raw.isascii() and raw.isprintable():
        return _ASCII_TOKEN_RE.findall(raw.lower())
    tokens = []
    for tok in _token_re().findall(raw):
        if len(tok) == 1:
            cls = _char_class(tok)
            if cls == 0:
                continue
            tokens.append(_fold_char(tok))
        else:
            tokens.append(_fold(tok))
    return tokens


def numeric_signature(tokens: Iterable[str]) -> Counter:
    """Multiset of ASCII-digit tokens with leading zeros stripped."""
    sig: Counter = Counter()
    for tok in tokens:
        if tok.isascii() and tok.isdigit():
            sig[tok.lstrip("0") or "0"] += 1
    return sig


def numbers_match(tokens_a: Iterable[str], tokens_b: Iterable[str]) -> bool:
    return numeric_signature(tokens_a) == numeric_signature(tokens_b)


def length_ratio_ok(len_s: int, len_t: int) -> bool:
    """True iff the two token counts are within a factor of two (inclusive)."""
    if len_s < 1 or len_t < 1:
        raise ValueError(f"token counts must be positive, got ({len_s}, {len_t})")
    return len_t >= math.ceil(len_s / MAX_LENGTH_RATIO) and len_t <= MAX_LENGTH_RATIO * len_s


@dataclass(frozen=True)
class Sentence:
    raw: str
    tokens: tuple[str, ...]
    lang: str

    @classmethod
    def from_raw(cls, raw: str, lang: str) -> Sentence:
        return cls(raw, tuple(tokenize(raw, lang)), lang)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Document:
    doc_id: str
    lang: str
    title: str = ""
    sentences: tuple[str, ...] = ()
    images: tuple[tuple[str, str], ...] = ()
    links: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.doc_id:
            raise DataError("document id must be non-empty")
        if not self.lang:
            raise DataError(f"document {self.doc_id!r} has an empty language code")

    @property
    def first_sentence(self) -> str:
        return self.sentences[0] if self.sentences else ""

    def texts(self) -> Iterator[str]:
        yield self.title
        yield from self.sentences
        for _, caption in self.images:
            yield caption

    def to_json(self) -> dict:
        return {
            "id": self.doc_id,
            "lang": self.lang,
            "title": self.title,
            "sentences": list(self.sentences),
            "images": [{"id": i, "caption": c} for i, c in self.images],
            "links": dict(sorted(self.links.items())),
        }

    @classmethod
    def from_json(cls, obj: dict) -> Document:
        try:
            return cls(
                doc_id=str(obj["id"]),
                lang=str(obj["lang"]),
                title=obj.get("title") or "",
                sentences=tuple(obj.get("sentences") or ()),
                images=tuple((str(im["id"]), im.get("caption") or "") for im in obj.get("images") or ()),
                links={str(k): str(v) for k, v in (obj.get("links") or {}).items()},
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise DataError(f"malformed document record: {exc}") from exc


@dataclass(frozen=True)
class DocPair:
    src_doc: Document
    tgt_doc: Document

    def __post_init__(self):
        if self.src_doc.links.get(self.tgt_doc.lang) != self.tgt_doc.doc_id:
            raise DataError(f"{self.src_doc.doc_id!r} does not link to {self.tgt_doc.doc_id!r}")


class DocumentStore:
    """Documents of one language, keyed by id, iterated in id order."""

    def __init__(self, docs: Iterable[Document] = (), lang: str | None = None):
        self.lang = lang
        self._docs: dict[str, Document] = {}
        for doc in docs:
            self.add(doc)

    def add(self, doc: Document) -> None:
        if doc.doc_id in self._docs:
            raise DataError(f"duplicate document id {doc.doc_id!r}")
        if self.lang is None:
            self.lang = doc.lang
        elif doc.lang != self.lang:
            raise DataError(f"document {doc.doc_id!r} has language {doc.lang!r}, store is {self.lang!r}")
        for text in doc.texts():
            if "\t" in text or "\n" in text or "\r" in text:
                raise DataError(f"document {doc.doc_id!r} contains a tab or newline in its text")
        self._docs[doc.doc_id] = doc

    def get(self, doc_id: str) -> Document | None:
        return self._docs.get(doc_id)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._docs

    def __len__(self) -> int:
        return len(self._docs)

    def __iter__(self) -> Iterator[Document]:
        for doc_id in sorted(self._docs):
            yield self._docs[doc_id]

    @classmethod
    def load(cls, path: str | Path, lang: str | None = None) -> DocumentStore:
        store = cls(lang=lang)
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
                store.add(Document.from_json(obj))
        return store

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for doc in self:
                fh.write(json.dumps(doc.to_json(), ensure_ascii=False) + "\n")
