import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from compmine.align import BilingualDictionary
from compmine.corpus import Document
from compmine.xembed import EmbeddingSpace


def random_mining_case(rng: np.random.Generator, n_docs=20, max_sents=40, vocab=200, dim=16):
    """Random linked documents over small vocabularies with a partial dictionary.

    Returns (doc pairs as (Document, Document), dictionary, space_e, space_f).
    """
    e_vocab = [f"e{i}" for i in range(vocab)] + [str(y) for y in (1987, 2019)]
    f_vocab = [f"f{i}" for i in range(vocab)] + [str(y) for y in (1987, 2019)]
    # some words get no vector so the OOV branch is exercised
    emb_e = EmbeddingSpace(e_vocab[: vocab - 10], rng.standard_normal((vocab - 10, dim)), "ee")
    emb_f = EmbeddingSpace(f_vocab[: vocab - 10], rng.standard_normal((vocab - 10, dim)), "ff")
    entries = {}
    for i in rng.choice(len(e_vocab), size=vocab // 3, replace=False):
        entries[(e_vocab[i], f_vocab[int(rng.integers(len(f_vocab)))])] = "seed"
    dictionary = BilingualDictionary(entries)

    def sent(words):
        n = int(rng.integers(1, 12))
        return " ".join(words[int(k)] for k in rng.integers(0, len(words), size=n))

    pairs = []
    for d in range(n_docs):
        n_e = int(rng.integers(1, max_sents + 1))
        n_f = int(rng.integers(1, max_sents + 1))
        de = Document(f"a{d:03d}", "ee", "", tuple(sent(e_vocab) for _ in range(n_e)), (), {"ff": f"b{d:03d}"})
        df = Document(f"b{d:03d}", "ff", "", tuple(sent(f_vocab) for _ in range(n_f)), (), {"ee": f"a{d:03d}"})
        pairs.append((de, df))
    return pairs, dictionary, emb_e, emb_f


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# One line per acceptance criterion, echoed again in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def report(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
