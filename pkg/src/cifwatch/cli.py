"""Command-line entry point: ``cifwatch <stage> --config <path> [stage flags]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import catalog as cat
from . import pipeline
from .config import PipelineConfig, load_config
from .corpus import load_corpus
from .embed import HashingEmbedder, RemoteEmbedder, load_index, query_topk
from .errors import CifwatchError, ConfigError
from .llm import BackendDescriptor
from .retrieval import QueryStrategy
from .taxonomy import TimeInterval

log = logging.getLogger("cifwatch")

INTERVAL_ALIASES = {
    "0-6": TimeInterval.H0_6, "6-12": TimeInterval.H6_12, "12-18": TimeInterval.H12_18,
    "18-24": TimeInterval.H18_24, "0-24": TimeInterval.FULL_DAY, "all": TimeInterval.FULL_DAY,
}


def parse_interval(text: str) -> TimeInterval:
    key = text.strip().replace("h", "").replace("H", "")
    if key in INTERVAL_ALIASES:
        return INTERVAL_ALIASES[key]
    try:
        return TimeInterval(text.strip().upper())
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown interval {text!r}") from None


def _with_paths(cfg: PipelineConfig, **overrides) -> PipelineConfig:
    paths = dict(cfg.paths)
    paths.update({k: Path(v) for k, v in overrides.items() if v is not None})
    return dataclasses.replace(cfg, paths=paths)


def _resolve_backend(cfg: PipelineConfig | None, name: str | None, default: str) -> BackendDescriptor:
    """A configured backend name, ``mock:<fixtures.json>`` or ``http`` (endpoint/model from env)."""
    name = name or default
    if name.startswith("mock:"):
        return BackendDescriptor(kind="mock", fixtures=Path(name[5:]))
    if name == "http":
        return BackendDescriptor.from_dict({"kind": "http"})
    if cfg is None:
        raise ConfigError(f"backend {name!r} needs --config")
    if name in ("generation", "classification"):
        return cfg.backend(name)
    backends = cfg.raw.get("backends") or {}
    if name not in backends:
        raise ConfigError(f"no backend named {name!r} in config")
    return BackendDescriptor.from_dict(backends[name])


def _config(args, required: bool = True) -> PipelineConfig | None:
    if args.config is None:
        if required:
            raise ConfigError(f"{args.command} needs --config")
        return None
    return load_config(args.config)


def cmd_fetch_cifs(args) -> int:
    cfg = _config(args, required=False)
    if cfg is not None and args.aoi is None and args.source is None:
        cfg = _with_paths(cfg, catalog=args.out)
        cifs = pipeline.run_stage(cfg, "fetch-cifs")
    else:
        if args.aoi is None and cfg is None:
            raise ConfigError("fetch-cifs needs --aoi or --config")
        aoi = cat.get_aoi(args.aoi) if args.aoi else cfg.aoi
        source = args.source or (cfg.catalog.source if cfg else "fixture")
        if source == "live":
            src = cat.LiveSource(endpoint=args.endpoint or cat.DEFAULT_ENDPOINT,
                                 cache_dir=Path(args.cache_dir))
        else:
            src = cat.FixtureSource(Path(args.fixture) if args.fixture else None)
        cifs = cat.fetch_cifs(aoi, list(cat.CifCategory), src)
        out = Path(args.out) if args.out else (cfg.path("catalog") if cfg else None)
        if out is None:
            raise ConfigError("fetch-cifs needs --out")
        cat.save_catalog(cifs, out)
    print(f"{len(cifs)} CIFs")
    return 0


def cmd_generate_corpus(args) -> int:
    cfg = _config(args)
    changes = {}
    if args.aoi:
        changes["aoi"] = cat.get_aoi(args.aoi)
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.backend:
        changes["generation"] = _resolve_backend(cfg, args.backend, "generation")
    cfg = dataclasses.replace(cfg, **changes)
    cfg = _with_paths(cfg, catalog=args.cifs, corpus=args.out, noise_pool=args.noise)
    for stage in ("generate", "label-status", "build-timeline"):
        result = pipeline.run_stage(cfg, stage)
    print(f"{len(result.tweets)} tweets ({result.signal_count} signal), "
          f"ratio {result.achieved_ratio:.4f}")
    return 0


def cmd_stage(args) -> int:
    cfg = _config(args)
    pipeline.run_stage(cfg, args.command)
    print(f"{args.command}: done")
    return 0


def cmd_index(args) -> int:
    cfg = _config(args, required=False)
    if cfg is not None and not any((args.corpus, args.provider, args.dim, args.out)):
        index = pipeline.run_stage(cfg, "index")
    else:
        if not (args.corpus and args.out):
            raise ConfigError("index needs --corpus and --out (or --config)")
        provider = _provider(args.provider or "mock", args.dim or 256, args.seed)
        from .embed import index_corpus, save_index

        index = index_corpus(load_corpus(args.corpus), provider)
        save_index(index, args.out)
    print(f"{len(index)} records, dim {index.dim}")
    return 0


def _provider(kind: str, dim: int, seed: int = 0):
    if kind == "mock":
        return HashingEmbedder(dim, seed)
    if kind == "remote":
        return RemoteEmbedder(None, "", dim)
    raise ConfigError(f"unknown embedding provider {kind!r}")


def cmd_query(args) -> int:
    index = load_index(args.index)
    provider = _provider(args.provider, args.dim or index.dim, args.seed)
    for rank, hit in enumerate(query_topk(index, args.text, provider, args.k, args.interval), 1):
        print(f"{rank}\t{hit.score:.6f}\t{hit.interval.value}\t{hit.tweet_id}")
    return 0


def cmd_retrieve(args) -> int:
    cfg = _config(args)
    if args.kmax is not None:
        grid = tuple(k for k in cfg.k_grid if k <= args.kmax)
        cfg = dataclasses.replace(cfg, k_grid=grid)
    cfg = _with_paths(cfg, index=args.index, catalog=args.cifs, corpus=args.corpus)
    strategies = [QueryStrategy.parse(args.strategy)] if args.strategy else None
    try:
        runs = pipeline.stage_retrieve(cfg, strategies)
    except CifwatchError as exc:
        raise pipeline.StageError("retrieve", str(cfg.paths["runs"]), exc) from exc
    if args.out and len(runs) == 1:
        from .retrieval import save_run

        save_run(runs[0], args.out, pipeline.stage_meta(cfg, "retrieve"))
    print(f"{sum(len(r.lists) for r in runs)} ranked lists")
    return 0


def cmd_classify(args) -> int:
    cfg = _config(args)
    if args.backend:
        cfg = dataclasses.replace(cfg, classification=_resolve_backend(cfg, args.backend, "classification"))
    if args.run:
        cfg = _with_paths(cfg, runs=Path(args.run).parent)
    cfg = _with_paths(cfg, predictions=args.out)
    rows = pipeline.run_stage(cfg, "classify")
    print(f"{len(rows)} predictions")
    return 0


def cmd_status(args) -> int:
    cfg = _config(args)
    cfg = _with_paths(cfg, predictions=args.predictions, overall_status=args.out)
    preds = pipeline.run_stage(cfg, "status")
    print(f"{len(preds)} overall-status predictions")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    cfg = _with_paths(cfg, reports=args.out)
    report = pipeline.run_stage(cfg, "evaluate")
    print(json.dumps(report.overall_status["prf"], indent=2)[:400])
    return 0


def cmd_run_all(args) -> int:
    cfg = _config(args)
    report = pipeline.run_all(cfg)
    for strategy, block in report.retrieval.items():
        full = block["map"]["FULL_DAY"][str(block["k_grid"][-1])]
        print(f"{strategy:16s} mAP@{block['k_grid'][-1]} 0h-24h = {full:.3f}  "
              f"relevant retrieved = {block['relevant_retrieved_full_day']}")
    print(f"reports in {cfg.path('reports')}")
    return 0


def cmd_validate(args) -> int:
    cfg = _config(args)
    source = cat.FixtureSource(cfg.catalog.fixture)
    cifs = pipeline.select_cifs(cfg, cat.fetch_cifs(cfg.aoi, cfg.catalog.categories, source))
    print(json.dumps({"aoi": cfg.aoi.name, "cifs": len(cifs),
                      "query_slots": pipeline.query_slots(cfg, cifs),
                      "config_hash": cfg.config_hash}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cifwatch", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="pipeline YAML config")
        p.set_defaults(func=fn)
        return p

    p = add("fetch-cifs", cmd_fetch_cifs, "acquire the CIF catalog")
    p.add_argument("--aoi")
    p.add_argument("--source", choices=["live", "fixture"])
    p.add_argument("--fixture", help="fixture catalog (default: bundled for the AOI)")
    p.add_argument("--endpoint", help="geocoder search URL (live mode)")
    p.add_argument("--cache-dir", default="cache")
    p.add_argument("--out")

    p = add("generate-corpus", cmd_generate_corpus, "generate, label and mix the corpus")
    p.add_argument("--aoi")
    p.add_argument("--cifs")
    p.add_argument("--backend", help="configured backend name, mock:<fixtures.json> or http")
    p.add_argument("--noise")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    for name, help_ in (("generate", "generate signal tweets"),
                        ("label-status", "label generated tweets with a status"),
                        ("build-timeline", "disperse, mix noise, inject names")):
        add(name, cmd_stage, help_)

    p = add("index", cmd_index, "embed and index the corpus")
    p.add_argument("--corpus")
    p.add_argument("--provider", choices=["mock", "remote"])
    p.add_argument("--dim", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = add("query", cmd_query, "top-K search against an index")
    p.add_argument("--index", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--interval", type=parse_interval, default=TimeInterval.FULL_DAY)
    p.add_argument("--provider", choices=["mock", "remote"], default="mock")
    p.add_argument("--dim", type=int)
    p.add_argument("--seed", type=int, default=0)

    p = add("retrieve", cmd_retrieve, "run CIF queries over the K grid")
    p.add_argument("--index")
    p.add_argument("--cifs")
    p.add_argument("--corpus")
    p.add_argument("--strategy", help="cif | cif+terms | cif+phrase")
    p.add_argument("--kmax", type=int)
    p.add_argument("--out")

    p = add("classify", cmd_classify, "zero-shot impact/severity/status classification")
    p.add_argument("--run")
    p.add_argument("--backend")
    p.add_argument("--out")

    p = add("status", cmd_status, "overall CIF status inference")
    p.add_argument("--predictions")
    p.add_argument("--out")

    p = add("evaluate", cmd_evaluate, "compute metrics and write reports")
    p.add_argument("--out")

    add("run-all", cmd_run_all, "run every stage in order")
    add("validate", cmd_validate, "check a config and count query slots")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CifwatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
