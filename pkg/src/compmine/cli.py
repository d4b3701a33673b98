"""Command-line entry point: ``compmine {seed,dict,cca,mine,project,all}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .errors import ConfigError, DataError
from .pipeline import STAGES, Pipeline, PipelineConfig, coerce

log = logging.getLogger("compmine")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML configuration file")
    common.add_argument("--threads", type=int, help="worker cap for parallel stages")
    common.add_argument("--force", action="store_true", help="rerun stages and accept modified upstream files")
    common.add_argument("--stats", type=Path, help="write a JSON summary of stage statistics here")
    common.add_argument("-v", "--verbose", action="store_true")
    params = common.add_argument_group("configuration overrides")
    for f in fields(PipelineConfig):
        if f.name == "threads":
            continue
        flags = [f"--{f.name}"]
        if "_" in f.name:
            flags.append(f"--{f.name.replace('_', '-')}")
        params.add_argument(*flags, dest=f"set_{f.name}", metavar="VALUE", default=None)

    parser = argparse.ArgumentParser(
        prog="compmine",
        description="Mine bitext from linked comparable documents and project dependency annotations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "seed": "extract title, first-sentence and caption pairs",
        "dict": "align the seed corpus and extract the bilingual dictionary",
        "cca": "fit CCA projections and project both embedding spaces",
        "mine": "score linked documents and keep mutual-best sentence pairs",
        "project": "project a source treebank onto target sentences",
        "all": "run every stage in order (project only when a treebank is configured)",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def load_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    for f in fields(PipelineConfig):
        value = getattr(args, f"set_{f.name}", None)
        if value is not None:
            setattr(cfg, f.name, coerce(f.name, value, Path.cwd()))
    if args.threads is not None:
        cfg.threads = args.threads
    cfg.validate()
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args)
        pipeline = Pipeline(cfg, force=args.force)
        if args.command == "all":
            stages = [s for s in STAGES if s != "project" or cfg.treebank is not None]
        else:
            stages = [args.command]
        for stage in stages:
            pipeline.run(stage)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    finally:
        if args.stats is not None and "pipeline" in locals():
            args.stats.parent.mkdir(parents=True, exist_ok=True)
            args.stats.write_text(json.dumps({"stages": pipeline.stats}, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
