"""Dependency and POS projection through intersected word alignments."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .align import Alignment, intersect
from .errors import DataError

log = logging.getLogger(__name__)

MASKED = None
PROJECTED = "projected"
SUPERVISED = "supervised"
MISSING = "missing"

MIN_RATIO = 0.5
MIN_RUN = 5


def _check_forest(heads: Sequence[int | None]) -> None:
    n = len(heads)
    for i, h in enumerate(heads, 1):
        if h is None:
            continue
        if not 0 <= h <= n:
            raise DataError(f"head {h} of token {i} out of range 0..{n}")
        if h == i:
            raise DataError(f"token {i} is its own head")
    if sum(1 for h in heads if h == 0) > 1:
        raise DataError("more than one root")
    # 0 = unvisited, 1 = on current path, 2 = done
    state = [0] * (n + 1)
    for start in range(1, n + 1):
        path = []
        node = start
        while node and heads[node - 1] is not None and state[node] == 0:
            state[node] = 1
            path.append(node)
            node = heads[node - 1]
        if node and state[node] == 1:
            raise DataError(f"cycle through token {node}")
        for p in path:
            state[p] = 2


@dataclass
class PartialDepTree:
    """Dependency tree whose heads and labels may be MASKED (None)."""

    tokens: list[str]
    heads: list[int | None]
    labels: list[str | None]
    pos: list[str | None] = field(default_factory=list)
    pos_source: list[str] = field(default_factory=list)
    comments: list[str] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.tokens)
        if not self.pos:
            self.pos = [None] * n
        if not self.pos_source:
            self.pos_source = [SUPERVISED if p is not None else MISSING for p in self.pos]
        if not (len(self.heads) == len(self.labels) == len(self.pos) == len(self.pos_source) == n):
            raise DataError("token, head, label and POS columns differ in length")
        self.validate()

    def validate(self) -> None:
        _check_forest(self.heads)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def n_projected(self) -> int:
        return sum(1 for h in self.heads if h is not None)

    def fields(self) -> tuple:
        return (tuple(self.tokens), tuple(self.pos), tuple(self.heads), tuple(self.labels))


class DepTree(PartialDepTree):
    """Complete tree: every token has a head, exactly one root, no cycles."""

    def validate(self) -> None:
        if any(h is None for h in self.heads):
            raise DataError("complete tree has masked heads")
        if self.tokens and sum(1 for h in self.heads if h == 0) != 1:
            raise DataError("tree must have exactly one root")
        super().validate()


def _parse_id(value: str) -> int | None:
    if "-" in value or "." in value:
        return None
    try:
        return int(value)
    except ValueError:
        raise DataError(f"bad token id {value!r}") from None


def _parse_block(lines: list[str], where: str) -> PartialDepTree:
    comments, tokens, pos, heads, labels, sources = [], [], [], [], [], []
    for line in lines:
        if line.startswith("#"):
            comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise DataError(f"{where}: expected 10 columns, got {len(cols)}")
        tid = _parse_id(cols[0])
        if tid is None:
            continue
        if tid != len(tokens) + 1:
            raise DataError(f"{where}: token id {tid} out of sequence")
        tokens.append(cols[1])
        pos.append(None if cols[3] == "_" else cols[3])
        if cols[6] == "_":
            heads.append(None)
        else:
            try:
                heads.append(int(cols[6]))
            except ValueError:
                raise DataError(f"{where}: bad head {cols[6]!r}") from None
        labels.append(None if cols[7] == "_" else cols[7])
        src = None
        for item in cols[9].split("|"):
            if item.startswith("POSSource="):
                src = item.split("=", 1)[1]
        sources.append(src or (SUPERVISED if pos[-1] is not None else MISSING))
    try:
        cls = DepTree if all(h is not None for h in heads) else PartialDepTree
        return cls(tokens, heads, labels, pos, sources, comments)
    except DataError as exc:
        raise DataError(f"{where}: {exc}") from None


def parse_conllu(text: str, name: str = "<string>") -> list[PartialDepTree]:
    trees, block, start = [], [], 1
    for lineno, line in enumerate(text.split("\n"), 1):
        line = line.rstrip("\r")
        if line.strip():
            if not block:
                start = lineno
            block.append(line)
        elif block:
            trees.append(_parse_block(block, f"{name}:{start}"))
            block = []
    if block:
        trees.append(_parse_block(block, f"{name}:{start}"))
    return trees


def read_conllu(path: str | Path) -> list[PartialDepTree]:
    """Read trees; multiword-token and empty-node lines are dropped."""
    return parse_conllu(Path(path).read_text(encoding="utf-8"), str(path))


def format_conllu(trees: Iterable[PartialDepTree], pos_provenance: bool = True) -> str:
    out = []
    for tree in trees:
        out.extend(tree.comments)
        for i, tok in enumerate(tree.tokens):
            head = tree.heads[i]
            misc = "_"
            if pos_provenance and tree.pos_source[i] in (PROJECTED, SUPERVISED) and tree.pos[i] is not None:
                misc = f"POSSource={tree.pos_source[i]}"
            out.append("\t".join([
                str(i + 1), tok, "_", tree.pos[i] or "_", "_", "_",
                "_" if head is None else str(head), tree.labels[i] or "_", "_", misc,
            ]))
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


def write_conllu(trees: Iterable[PartialDepTree], path: str | Path, pos_provenance: bool = True) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_conllu(trees, pos_provenance))


def project_tree(src: PartialDepTree, align: Alignment, tgt_tokens: Sequence[str]) -> PartialDepTree:
    """Copy heads, labels and POS from ``src`` onto ``tgt_tokens`` through a one-to-one alignment.

    A source edge i <- j lands on m <- k when i aligns to m and j aligns to k;
    an aligned source root becomes a target root.  Everything else is masked.
    """
    if align.len_src != len(src) or align.len_tgt != len(tgt_tokens):
        raise DataError(
            f"alignment is {align.len_src}x{align.len_tgt}, sentences are {len(src)}x{len(tgt_tokens)}"
        )
    a = align.src_to_tgt()
    n = len(tgt_tokens)
    heads: list[int | None] = [None] * n
    labels: list[str | None] = [None] * n
    pos: list[str | None] = [None] * n
    sources = [MISSING] * n
    for i, m in a.items():
        h = src.heads[i - 1]
        if h == 0:
            heads[m - 1] = 0
            labels[m - 1] = src.labels[i - 1]
        elif h is not None and h in a:
            heads[m - 1] = a[h]
            labels[m - 1] = src.labels[i - 1]
        if src.pos[i - 1] is not None:
            pos[m - 1] = src.pos[i - 1]
            sources[m - 1] = PROJECTED
    return PartialDepTree(list(tgt_tokens), heads, labels, pos, sources)


def longest_run(tree: PartialDepTree) -> int:
    best = run = 0
    for h in tree.heads:
        run = run + 1 if h is not None else 0
        best = max(best, run)
    return best


def density_keep(tree: PartialDepTree, min_ratio: float = MIN_RATIO, min_run: int = MIN_RUN) -> bool:
    """Keep when enough tokens, or a long enough consecutive stretch, have projected heads."""
    n = len(tree)
    if n == 0:
        return False
    return tree.n_projected >= min_ratio * n or longest_run(tree) >= min_run


def merge_pos(tree: PartialDepTree, supervised_tags: Sequence[str]) -> PartialDepTree:
    """Projected tags stay; every other token takes the supervised tag."""
    if len(supervised_tags) != len(tree):
        raise DataError(f"{len(supervised_tags)} supervised tags for {len(tree)} tokens")
    pos, sources = [], []
    for tag, src, sup in zip(tree.pos, tree.pos_source, supervised_tags):
        if src == PROJECTED:
            pos.append(tag)
            sources.append(PROJECTED)
        else:
            pos.append(sup)
            sources.append(SUPERVISED)
    return PartialDepTree(list(tree.tokens), list(tree.heads), list(tree.labels), pos, sources,
                          list(tree.comments))


@dataclass(frozen=True)
class ProjectionConfig:
    min_ratio: float = MIN_RATIO
    min_run: int = MIN_RUN


@dataclass
class ProjectionResult:
    trees: list[PartialDepTree]
    kept_indices: list[int]
    total: int
    mean_density: float

    @property
    def kept_ratio(self) -> float:
        return len(self.trees) / self.total if self.total else 0.0

    def stats(self) -> dict:
        return {
            "sentences": self.total,
            "kept": len(self.trees),
            "kept_ratio": self.kept_ratio,
            "mean_projected_density": self.mean_density,
        }


def project_corpus(
    tgt_sentences: Sequence[Sequence[str]],
    src_trees: Sequence[PartialDepTree],
    fwd_alignments: Sequence[Alignment],
    rev_alignments: Sequence[Alignment],
    cfg: ProjectionConfig = ProjectionConfig(),
    supervised_tags: Sequence[Sequence[str]] | None = None,
) -> ProjectionResult:
    """Intersect, project, density-filter and optionally merge POS, sentence by sentence.

    ``fwd_alignments`` index (source tree token, target token); ``rev_alignments``
    index (target token, source tree token).
    """
    n = len(src_trees)
    lengths = {len(tgt_sentences), len(fwd_alignments), len(rev_alignments)}
    if supervised_tags is not None:
        lengths.add(len(supervised_tags))
    if lengths != {n}:
        raise DataError(f"input streams differ in length: trees={n}, others={sorted(lengths)}")
    kept, kept_idx, densities = [], [], []
    for k in range(n):
        tree = project_tree(src_trees[k], intersect(fwd_alignments[k], rev_alignments[k]), tgt_sentences[k])
        densities.append(tree.n_projected / len(tree) if len(tree) else 0.0)
        if not density_keep(tree, cfg.min_ratio, cfg.min_run):
            continue
        if supervised_tags is not None:
            tree = merge_pos(tree, supervised_tags[k])
        kept.append(tree)
        kept_idx.append(k)
    mean_density = sum(densities) / n if n else 0.0
    return ProjectionResult(kept, kept_idx, n, mean_density)
