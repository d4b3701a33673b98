"""Pipeline stages with content-hashed manifests."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable

from . import __version__
from .align import (
    RELATED,
    SEED,
    BilingualDictionary,
    learn_dictionary,
    merge_dictionaries,
    read_pharaoh,
    train_model1,
    viterbi_align,
)
from .corpus import DocumentStore, tokenize
from .errors import ConfigError, DataError
from .miner import MiningConfig, SimilarityModel, mine
from .project import ProjectionConfig, project_corpus, read_conllu, write_conllu
from .seed import SeedCorpus, SeedKind, extract_seed, linked_pairs
from .xembed import fit_cca, load_embeddings, project

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
STAGES = ("seed", "dict", "cca", "mine", "project")

OUTPUTS = {
    "seed": ["seed.tsv"],
    "dict": ["dict.tsv", "table.e-f.tsv", "table.f-e.tsv"],
    "cca": ["cca.txt", "emb_e.proj.vec", "emb_f.proj.vec"],
    "mine": ["mined.tsv"],
    "project": ["treebank.conllu"],
}
# Upstream files each stage consumes from the output directory.
UPSTREAM = {
    "seed": [],
    "dict": ["seed.tsv"],
    "cca": ["dict.tsv"],
    "mine": ["seed.tsv", "dict.tsv", "emb_e.proj.vec", "emb_f.proj.vec"],
    "project": [],
}
PRODUCER = {name: stage for stage, names in OUTPUTS.items() for name in names}


@dataclass
class PipelineConfig:
    lang_e: str = "en"
    lang_f: str = ""
    lang_g: str | None = None
    docs_e: Path | None = None
    docs_f: Path | None = None
    emb_e: Path | None = None
    emb_f: Path | None = None
    related_parallel: Path | None = None
    output_dir: Path = Path("out")
    iterations: int = 5
    min_count: int = 1
    k: int | None = None
    eps: float | None = None
    tau: float = 0.5
    numeric_filter: bool = True
    include_titles: bool = True
    min_ratio: float = 0.5
    min_run: int = 5
    treebank: Path | None = None
    target_text: Path | None = None
    fwd_align: Path | None = None
    rev_align: Path | None = None
    target_pos: Path | None = None
    seed: int = 0
    threads: int = 1

    # Parameters each stage's outputs depend on (besides input file contents).
    STAGE_PARAMS = {
        "seed": ("lang_e", "lang_f"),
        "dict": ("lang_e", "lang_f", "lang_g", "iterations", "min_count"),
        "cca": ("k", "eps"),
        "mine": ("lang_e", "lang_f", "tau", "numeric_filter", "include_titles"),
        "project": ("iterations", "min_ratio", "min_run"),
    }
    STAGE_INPUTS = {
        "seed": ("docs_e", "docs_f"),
        "dict": ("related_parallel",),
        "cca": ("emb_e", "emb_f"),
        "mine": ("docs_e", "docs_f"),
        "project": ("treebank", "target_text", "fwd_align", "rev_align", "target_pos"),
    }

    @classmethod
    def field_types(cls) -> dict[str, Any]:
        return {f.name: f.type for f in fields(cls)}

    @classmethod
    def from_mapping(cls, data: dict[str, Any], base: Path = Path(".")) -> PipelineConfig:
        flat: dict[str, Any] = {}
        for key, value in data.items():
            if isinstance(value, dict):
                flat.update(value)
            else:
                flat[key] = value
        known = cls.field_types()
        unknown = set(flat) - set(known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        cfg = cls()
        for key, value in flat.items():
            setattr(cfg, key, coerce(key, value, base))
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> PipelineConfig:
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_mapping(data, path.parent)

    def snapshot(self) -> dict[str, Any]:
        return {k: (str(v) if isinstance(v, Path) else v) for k, v in dataclasses.asdict(self).items()}

    def validate(self) -> None:
        if not self.lang_f or not self.lang_e:
            raise ConfigError("lang_e and lang_f are required")
        if self.lang_e == self.lang_f:
            raise ConfigError("lang_e and lang_f must differ")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.min_count < 1:
            raise ConfigError("min_count must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not 0 <= self.min_ratio <= 1 or self.min_run < 1:
            raise ConfigError("density thresholds out of range")
        try:
            MiningConfig(self.tau)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Path) and f.name != "output_dir" and not value.exists():
                raise ConfigError(f"{f.name}: {value} does not exist")

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError(f"missing required setting(s): {', '.join(missing)}")


_PATH_FIELDS = {f.name for f in fields(PipelineConfig) if "Path" in str(f.type)}
_INT_FIELDS = {"iterations", "min_count", "k", "min_run", "seed", "threads"}
_FLOAT_FIELDS = {"eps", "tau", "min_ratio"}
_BOOL_FIELDS = {"numeric_filter", "include_titles"}


def coerce(key: str, value: Any, base: Path = Path(".")) -> Any:
    if value is None or value == "":
        return None if key not in ("lang_e", "lang_f") else value
    try:
        if key in _PATH_FIELDS:
            p = Path(value)
            return p if p.is_absolute() else base / p
        if key in _BOOL_FIELDS:
            if isinstance(value, bool):
                return value
            s = str(value).lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if key in _INT_FIELDS:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        if key in _FLOAT_FIELDS:
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {key}: {value!r}") from None
    return str(value)


def file_hash(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Manifest:
    def __init__(self, output_dir: Path):
        self.path = output_dir / MANIFEST
        if self.path.exists():
            try:
                self.data = json.loads(self.path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise DataError(f"{self.path}: corrupt manifest: {exc}") from None
        else:
            self.data = {"tool": "compmine", "version": __version__, "stages": {}}

    def stage(self, name: str) -> dict | None:
        return self.data["stages"].get(name)

    def record(self, name: str, entry: dict) -> None:
        self.data["stages"][name] = entry
        self.data["version"] = __version__
        self.save()

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(self.path)


class Pipeline:
    def __init__(self, cfg: PipelineConfig, force: bool = False):
        self.cfg = cfg
        self.force = force
        self.out = cfg.output_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = Manifest(self.out)
        self.stats: dict[str, dict] = {}

    def _check_upstream(self, stage: str) -> dict[str, str]:
        hashes = {}
        for name in UPSTREAM[stage]:
            path = self.out / name
            if not path.exists():
                raise ConfigError(f"{stage}: missing upstream output {path}; run `{PRODUCER[name]}` first")
            digest = file_hash(path)
            recorded = (self.manifest.stage(PRODUCER[name]) or {}).get("outputs", {}).get(name)
            if recorded != digest and not self.force:
                raise DataError(
                    f"{stage}: {path} does not match the manifest (stale or modified); rerun "
                    f"`{PRODUCER[name]}` or pass --force"
                )
            hashes[name] = digest
        return hashes

    def run(self, stage: str) -> dict:
        runner: Callable[[], dict] = getattr(self, f"_run_{stage}")
        upstream = self._check_upstream(stage)
        inputs = {
            name: file_hash(getattr(self.cfg, name))
            for name in PipelineConfig.STAGE_INPUTS[stage]
            if getattr(self.cfg, name) is not None
        }
        inputs.update(upstream)
        params = {p: self.cfg.snapshot()[p] for p in PipelineConfig.STAGE_PARAMS[stage]}
        prev = self.manifest.stage(stage)
        if not self.force and prev and prev.get("inputs") == inputs and prev.get("params") == params:
            outputs = prev.get("outputs", {})
            if all((self.out / n).exists() and file_hash(self.out / n) == h for n, h in outputs.items()):
                log.info("%s: up to date, skipping", stage)
                self.stats[stage] = prev.get("stats", {})
                return self.stats[stage]
        start = time.perf_counter()
        stats = runner()
        elapsed = time.perf_counter() - start
        outputs = {n: file_hash(self.out / n) for n in OUTPUTS[stage] if (self.out / n).exists()}
        self.manifest.record(stage, {
            "inputs": inputs,
            "params": params,
            "config": self.cfg.snapshot(),
            "outputs": outputs,
            "seconds": round(elapsed, 3),
            "stats": stats,
        })
        self.stats[stage] = stats
        log.info("%s: done in %.2fs %s", stage, elapsed, json.dumps(stats, sort_keys=True))
        return stats

    def _stores(self) -> tuple[DocumentStore, DocumentStore]:
        self.cfg.require("docs_e", "docs_f")
        store_e = DocumentStore.load(self.cfg.docs_e, self.cfg.lang_e)
        store_f = DocumentStore.load(self.cfg.docs_f, self.cfg.lang_f)
        return store_e, store_f

    def _run_seed(self) -> dict:
        store_e, store_f = self._stores()
        if not len(store_e) or not len(store_f):
            raise DataError("document stores are empty")
        corpus, pairs = extract_seed(store_e, store_f)
        if not pairs:
            log.warning("no linked documents: seed has no titles or first sentences")
        corpus.save(self.out / "seed.tsv")
        return {"linked_pairs": len(pairs), "pairs": len(corpus), **corpus.counts}

    def _run_dict(self) -> dict:
        cfg = self.cfg
        seed = SeedCorpus.load(self.out / "seed.tsv", cfg.lang_e, cfg.lang_f)
        if not len(seed):
            raise DataError("seed corpus is empty; cannot learn a dictionary")
        d_fe, fwd, rev = learn_dictionary(seed.sentence_pairs(), cfg.iterations, cfg.min_count, SEED, cfg.threads)
        fwd.save(self.out / "table.e-f.tsv")
        rev.save(self.out / "table.f-e.tsv")
        stats = {"seed_entries": len(d_fe)}
        merged = d_fe
        if cfg.related_parallel is not None:
            related = read_parallel(cfg.related_parallel, cfg.lang_e, cfg.lang_g or "")
            d_ge, _, _ = learn_dictionary(related, cfg.iterations, cfg.min_count, RELATED, cfg.threads)
            merged = merge_dictionaries(d_fe, d_ge)
            stats["related_entries"] = len(d_ge)
        merged.save(self.out / "dict.tsv")
        stats["entries"] = len(merged)
        return stats

    def _run_cca(self) -> dict:
        cfg = self.cfg
        cfg.require("emb_e", "emb_f")
        dictionary = BilingualDictionary.load(self.out / "dict.tsv")
        emb_e = load_embeddings(cfg.emb_e, cfg.lang_e)
        emb_f = load_embeddings(cfg.emb_f, cfg.lang_f)
        proj = fit_cca(dictionary, emb_e, emb_f, cfg.k, cfg.eps)
        proj.save(self.out / "cca.txt")
        project(emb_e, "e", proj).save(self.out / "emb_e.proj.vec")
        project(emb_f, "f", proj).save(self.out / "emb_f.proj.vec")
        return {"k": proj.k, "eps": proj.eps, "top_correlation": float(proj.correlations[0])}

    def _run_mine(self) -> dict:
        cfg = self.cfg
        store_e, store_f = self._stores()
        dictionary = BilingualDictionary.load(self.out / "dict.tsv")
        space_e = load_embeddings(self.out / "emb_e.proj.vec", cfg.lang_e)
        space_f = load_embeddings(self.out / "emb_f.proj.vec", cfg.lang_f)
        model = SimilarityModel(dictionary, space_e, space_f)
        titles = SeedCorpus.load(self.out / "seed.tsv", cfg.lang_e, cfg.lang_f).of_kind(SeedKind.TITLE)
        mcfg = MiningConfig(cfg.tau, cfg.numeric_filter, cfg.include_titles)
        mined = mine(linked_pairs(store_e, store_f), mcfg, model, titles, cfg.threads)
        mined.save(self.out / "mined.tsv")
        return mined.stats()

    def _run_project(self) -> dict:
        cfg = self.cfg
        cfg.require("treebank", "target_text")
        src_trees = read_conllu(cfg.treebank)
        targets = [line.split() for line in read_lines(cfg.target_text)]
        if len(targets) != len(src_trees):
            raise DataError(f"{len(src_trees)} source trees but {len(targets)} target sentences")
        lengths = [(len(t), len(s)) for t, s in zip(src_trees, targets)]
        if cfg.fwd_align is not None and cfg.rev_align is not None:
            fwd = read_pharaoh(cfg.fwd_align, lengths)
            rev = read_pharaoh(cfg.rev_align, [(b, a) for a, b in lengths])
        else:
            fwd, rev = align_bitext([[w.lower() for w in t.tokens] for t in src_trees],
                                    [[w.lower() for w in s] for s in targets], cfg.iterations, cfg.threads)
        tags = None
        if cfg.target_pos is not None:
            tags = [line.split() for line in read_lines(cfg.target_pos)]
        result = project_corpus(targets, src_trees, fwd, rev, ProjectionConfig(cfg.min_ratio, cfg.min_run), tags)
        write_conllu(result.trees, self.out / "treebank.conllu")
        return result.stats()


def read_lines(path: Path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def read_parallel(path: Path, lang_a: str, lang_b: str) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    """Tab-separated sentence pairs, tokenized; pairs with an empty side are dropped."""
    out = []
    for lineno, line in enumerate(read_lines(path), 1):
        cols = line.split("\t")
        if len(cols) != 2:
            raise DataError(f"{path}:{lineno}: expected 2 tab-separated columns")
        a, b = tokenize(cols[0], lang_a), tokenize(cols[1], lang_b)
        if a and b:
            out.append((tuple(a), tuple(b)))
    return out


def align_bitext(src: list[list[str]], tgt: list[list[str]], iterations: int, threads: int = 1):
    """Model 1 alignments in both directions for a tokenized bitext."""
    usable = [k for k in range(len(src)) if src[k] and tgt[k]]
    corpus = [(tuple(src[k]), tuple(tgt[k])) for k in usable]
    fwd_t = train_model1(corpus, iterations, "e->f", threads)
    rev_t = train_model1([(t, s) for s, t in corpus], iterations, "f->e", threads)
    fwd = [viterbi_align(fwd_t, (s, t)) for s, t in zip(src, tgt)]
    rev = [viterbi_align(rev_t, (t, s)) for s, t in zip(src, tgt)]
    return fwd, rev
