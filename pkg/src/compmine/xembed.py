"""Monolingual embeddings and CCA projection into a shared space."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .align import BilingualDictionary
from .errors import DataError

log = logging.getLogger(__name__)

# Share of malformed rows tolerated when loading an embedding file.
MAX_BAD_ROW_FRACTION = 0.01
# Default ridge, relative to the mean covariance diagonal.
RELATIVE_RIDGE = 1e-8
# Singular values below this fraction of the largest count as numerically zero.
RANK_TOLERANCE = 1e-9


@dataclass
class EmbeddingSpace:
    words: list[str]
    vectors: np.ndarray
    lang: str = ""
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.words):
            raise DataError(f"vector matrix shape {self.vectors.shape} does not match {len(self.words)} words")
        if not np.all(np.isfinite(self.vectors)):
            raise DataError("embedding vectors contain NaN or Inf")
        self.index = {}
        for i, w in enumerate(self.words):
            self.index.setdefault(w, i)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def get(self, word: str) -> np.ndarray | None:
        i = self.index.get(word)
        return None if i is None else self.vectors[i]

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{len(self.words)} {self.dim}\n")
            for w, v in zip(self.words, self.vectors.tolist()):
                fh.write(w + " " + " ".join(repr(x) for x in v) + "\n")


def load_embeddings(path: str | Path, lang: str = "") -> EmbeddingSpace:
    """Read a word2vec text file.

    The header's row count is advisory.  Rows with the wrong number of values,
    unparsable or non-finite numbers are skipped; more than 1% of them (and
    always more than one) is an error.  Repeated words keep their first vector.
    """
    with open(path, encoding="utf-8", errors="surrogateescape") as fh:
        header = fh.readline().split()
        try:
            n_declared, dim = (int(x) for x in header)
        except ValueError:
            raise DataError(f"{path}: bad embedding header {header!r}") from None
        if dim < 1:
            raise DataError(f"{path}: dimension must be positive")
        words: list[str] = []
        rows: list[np.ndarray] = []
        seen: set[str] = set()
        n_rows = n_bad = 0
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if parts == [""]:
                continue
            n_rows += 1
            vec = None
            if len(parts) == dim + 1:
                try:
                    vec = np.array(parts[1:], dtype=np.float64)
                except ValueError:
                    vec = None
            if vec is None or not np.all(np.isfinite(vec)):
                n_bad += 1
                log.warning("%s:%d: skipping malformed embedding row", path, lineno)
                continue
            if parts[0] in seen:
                continue
            seen.add(parts[0])
            words.append(parts[0])
            rows.append(vec)
    if n_bad > max(1, int(MAX_BAD_ROW_FRACTION * n_rows)):
        raise DataError(f"{path}: {n_bad} of {n_rows} embedding rows are malformed")
    if n_declared != n_rows:
        log.info("%s: header declares %d rows, found %d", path, n_declared, n_rows)
    vectors = np.vstack(rows) if rows else np.zeros((0, dim))
    return EmbeddingSpace(words, vectors, lang)


@dataclass(frozen=True)
class CcaProjection:
    A: np.ndarray
    B: np.ndarray
    correlations: np.ndarray
    mean_e: np.ndarray
    mean_f: np.ndarray
    eps: float

    @property
    def k(self) -> int:
        return len(self.correlations)

    def matrix(self, side: str) -> tuple[np.ndarray, np.ndarray]:
        if side == "e":
            return self.mean_e, self.A
        if side == "f":
            return self.mean_f, self.B
        raise ValueError(f"side must be 'e' or 'f', got {side!r}")

    def save(self, path: str | Path) -> None:
        def row(v) -> str:
            return " ".join(repr(float(x)) for x in v)

        d_e, d_f = self.A.shape[0], self.B.shape[0]
        lines = ["# cca projection", f"dims {d_e} {d_f}", f"k {self.k}", f"eps {self.eps!r}"]
        lines += ["[mean_e]", row(self.mean_e), "[mean_f]", row(self.mean_f)]
        lines += ["[A]"] + [row(r) for r in self.A]
        lines += ["[B]"] + [row(r) for r in self.B]
        lines += ["[correlations]", row(self.correlations)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> CcaProjection:
        sections: dict[str, list[str]] = {}
        meta: dict[str, list[str]] = {}
        current = None
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1]
                sections[current] = []
            elif current is None:
                key, *vals = line.split()
                meta[key] = vals
            else:
                sections[current].append(line)
        try:
            d_e, d_f = (int(x) for x in meta["dims"])
            k = int(meta["k"][0])

            def mat(name, rows):
                m = np.array([[float(x) for x in r.split()] for r in sections[name]]).reshape(rows, k)
                return m

            proj = cls(
                A=mat("A", d_e),
                B=mat("B", d_f),
                correlations=np.array([float(x) for x in sections["correlations"][0].split()]),
                mean_e=np.array([float(x) for x in sections["mean_e"][0].split()]),
                mean_f=np.array([float(x) for x in sections["mean_f"][0].split()]),
                eps=float(meta["eps"][0]),
            )
        except (KeyError, ValueError, IndexError) as exc:
            raise DataError(f"{path}: malformed projection file: {exc}") from exc
        return proj


def default_k(d_e: int, d_f: int) -> int:
    return max(1, min(d_e, d_f) // 2)


def _inv_sqrt(c: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(c)
    if w.min() <= 0:
        raise DataError("covariance is not positive definite; increase eps")
    return (v / np.sqrt(w)) @ v.T


def paired_matrices(
    dictionary: BilingualDictionary, emb_e: EmbeddingSpace, emb_f: EmbeddingSpace
) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for s, t in dictionary:
        if s in emb_e and t in emb_f:
            xs.append(emb_e.index[s])
            ys.append(emb_f.index[t])
    return emb_e.vectors[xs], emb_f.vectors[ys]


def fit_cca_matrices(X: np.ndarray, Y: np.ndarray, k: int | None = None, eps: float | None = None) -> CcaProjection:
    n = X.shape[0]
    if n < 2 or Y.shape[0] != n:
        raise DataError(f"fewer than 2 usable pairs ({n})")
    d_e, d_f = X.shape[1], Y.shape[1]
    if k is None:
        k = default_k(d_e, d_f)
    if k < 1 or k > min(d_e, d_f):
        raise ValueError(f"k={k} must be in [1, {min(d_e, d_f)}]")
    mean_e, mean_f = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - mean_e, Y - mean_f
    cxx = Xc.T @ Xc / (n - 1)
    cyy = Yc.T @ Yc / (n - 1)
    cxy = Xc.T @ Yc / (n - 1)
    if eps is None:
        eps = RELATIVE_RIDGE * float(np.mean(np.concatenate([np.diag(cxx), np.diag(cyy)])))
        if eps <= 0:
            raise DataError("paired vectors have zero variance")
    wx = _inv_sqrt(cxx + eps * np.eye(d_e))
    wy = _inv_sqrt(cyy + eps * np.eye(d_f))
    u, s, vt = np.linalg.svd(wx @ cxy @ wy)
    rank = int(np.sum(s > RANK_TOLERANCE * s[0])) if s.size and s[0] > 0 else 0
    k_eff = min(k, rank)
    if k_eff < k:
        log.warning("cca: reducing k from %d to numerical rank %d", k, k_eff)
    if k_eff == 0:
        raise DataError("paired vectors are uncorrelated; nothing to project")
    A = wx @ u[:, :k_eff]
    B = wy @ vt.T[:, :k_eff]
    for c in range(k_eff):
        if A[np.argmax(np.abs(A[:, c])), c] < 0:
            A[:, c] *= -1
            B[:, c] *= -1
    return CcaProjection(A, B, s[:k_eff].copy(), mean_e, mean_f, float(eps))


def fit_cca(
    dictionary: BilingualDictionary,
    emb_e: EmbeddingSpace,
    emb_f: EmbeddingSpace,
    k: int | None = None,
    eps: float | None = None,
) -> CcaProjection:
    """Fit CCA on dictionary-paired vectors (one row per usable entry)."""
    X, Y = paired_matrices(dictionary, emb_e, emb_f)
    return fit_cca_matrices(X, Y, k, eps)


def project(space: EmbeddingSpace, side: str, proj: CcaProjection) -> EmbeddingSpace:
    mean, m = proj.matrix(side)
    if space.dim != m.shape[0]:
        raise ValueError(f"space has dim {space.dim}, projection expects {m.shape[0]}")
    return EmbeddingSpace(list(space.words), (space.vectors - mean) @ m, space.lang)


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))
