"""Pipeline configuration loaded from one YAML file."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .catalog import AreaOfInterest, get_aoi
from .corpus import DEFAULT_INJECTION_RATE, DEFAULT_PRECEDENCE, DEFAULT_SIGNAL_RATIO
from .errors import ConfigError
from .llm import BackendDescriptor
from .metrics import PAPER_LITERAL, ApConfig
from .retrieval import DEFAULT_K_GRID, QueryStrategy, validate_k_grid
from .taxonomy import CifCategory, ConsolidatedImpact, DisasterKind

DEFAULT_PATHS = {
    "catalog": "catalog.jsonl",
    "signal_raw": "signal_raw.jsonl",
    "rejects": "rejects.jsonl",
    "signal": "signal.jsonl",
    "corpus": "corpus.jsonl",
    "index": "index.bin",
    "runs": "runs",
    "predictions": "predictions.jsonl",
    "overall_status": "overall_status.jsonl",
    "reports": "reports",
}


@dataclass(frozen=True)
class CatalogSettings:
    source: str = "fixture"  # "fixture" | "live"
    fixture: Path | None = None
    categories: tuple[CifCategory, ...] = tuple(CifCategory)
    ids: tuple[str, ...] | None = None  # keep only these CIFs, in this order
    limit: int | None = None  # keep only the first N CIFs
    endpoint: str | None = None
    cache_dir: Path | None = None
    delay_ms: int = 1100


@dataclass(frozen=True)
class EmbeddingSettings:
    provider: str = "mock"  # "mock" | "remote"
    dim: int = 256
    seed: int = 0
    endpoint: str | None = None
    model: str | None = None


@dataclass(frozen=True)
class PipelineConfig:
    aoi: AreaOfInterest
    precedence: tuple[ConsolidatedImpact, ...]
    paths: dict[str, Path]
    catalog: CatalogSettings
    generation: BackendDescriptor | None
    classification: BackendDescriptor | None
    embedding: EmbeddingSettings
    signal_ratio: float = DEFAULT_SIGNAL_RATIO
    injection_rate: float = DEFAULT_INJECTION_RATE
    seed: int = 0
    strategies: tuple[QueryStrategy, ...] = tuple(QueryStrategy)
    k_grid: tuple[int, ...] = DEFAULT_K_GRID
    classify_strategy: QueryStrategy = QueryStrategy.CIF_PLUS_PHRASE
    classify_k: int = 50
    ap_mode: str = PAPER_LITERAL
    step: int = 5
    config_hash: str = ""
    raw: dict = field(default_factory=dict, repr=False)

    def path(self, key: str) -> Path:
        return self.paths[key]

    def run_path(self, strategy: QueryStrategy) -> Path:
        return self.paths["runs"] / f"{QueryStrategy(strategy).value}.jsonl"

    def backend(self, name: str) -> BackendDescriptor:
        desc = {"generation": self.generation, "classification": self.classification}.get(name)
        if desc is None:
            raise ConfigError(f"no {name!r} backend configured")
        return desc


def config_hash(raw: dict) -> str:
    """Hash of everything except artifact locations."""
    body = {k: v for k, v in raw.items() if k != "paths"}
    blob = json.dumps(body, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _section(raw: dict, key: str) -> dict:
    value = raw.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section {key!r} must be a mapping")
    return value


def _resolve(base: Path, value: Any) -> Path | None:
    if value is None:
        return None
    p = Path(str(value)).expanduser()
    return p if p.is_absolute() else base / p


def parse_config(raw: dict, base_dir: Path = Path(".")) -> PipelineConfig:
    """Validate a config mapping. Relative paths resolve against ``base_dir``."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        aoi_raw = _section(raw, "aoi")
        if "name" not in aoi_raw:
            raise ConfigError("aoi.name is required")
        try:
            known = get_aoi(aoi_raw["name"])
        except ConfigError:
            known = None
        kind = aoi_raw.get("disaster_kind", known.disaster_kind if known else None)
        terms = aoi_raw.get("impact_terms", known.impact_terms if known else ())
        if kind is None:
            raise ConfigError(f"aoi.disaster_kind is required for {aoi_raw['name']!r}")
        aoi = AreaOfInterest(aoi_raw["name"], DisasterKind(kind), tuple(terms))
        precedence = tuple(ConsolidatedImpact(p) for p in aoi_raw.get("precedence", DEFAULT_PRECEDENCE))
        if set(precedence) != set(ConsolidatedImpact) or len(precedence) != len(ConsolidatedImpact):
            raise ConfigError("aoi.precedence must list every consolidated impact label once")

        paths_raw = _section(raw, "paths")
        workdir = _resolve(base_dir, paths_raw.get("workdir", "."))
        paths = {key: _resolve(workdir, paths_raw.get(key, default))
                 for key, default in DEFAULT_PATHS.items()}
        paths["noise_pool"] = _resolve(base_dir, paths_raw.get("noise_pool"))

        cat_raw = _section(raw, "catalog")
        catalog = CatalogSettings(
            source=cat_raw.get("source", "fixture"),
            fixture=_resolve(base_dir, cat_raw.get("fixture")),
            categories=tuple(CifCategory(c) for c in cat_raw.get("categories", list(CifCategory))),
            ids=tuple(cat_raw["ids"]) if cat_raw.get("ids") else None,
            limit=cat_raw.get("limit"),
            endpoint=cat_raw.get("endpoint"),
            cache_dir=_resolve(workdir, cat_raw.get("cache_dir", "cache")),
            delay_ms=int(cat_raw.get("delay_ms", 1100)),
        )
        if catalog.source not in ("fixture", "live"):
            raise ConfigError(f"catalog.source must be fixture or live, not {catalog.source!r}")

        backends = _section(raw, "backends")

        def descriptor(name: str) -> BackendDescriptor | None:
            d = backends.get(name)
            if d is None:
                return None
            d = dict(d)
            if d.get("fixtures") is not None:
                d["fixtures"] = _resolve(base_dir, d["fixtures"])
            return BackendDescriptor.from_dict(d)

        emb_raw = dict(backends.get("embedding") or {})
        embedding = EmbeddingSettings(
            provider=emb_raw.get("kind", emb_raw.get("provider", "mock")),
            dim=int(emb_raw.get("dim", 256)),
            seed=int(emb_raw.get("seed", 0)),
            endpoint=emb_raw.get("endpoint"),
            model=emb_raw.get("model"),
        )
        if embedding.provider not in ("mock", "remote"):
            raise ConfigError(f"embedding provider must be mock or remote, not {embedding.provider!r}")

        corpus_raw = _section(raw, "corpus")
        if "seed" not in corpus_raw:
            raise ConfigError("corpus.seed is required")
        ret_raw = _section(raw, "retrieval")
        cls_raw = _section(raw, "classification")
        met_raw = _section(raw, "metrics")
        step = int(met_raw.get("step", 5))
        k_grid = validate_k_grid(ret_raw.get("k_grid", DEFAULT_K_GRID), step)
        classify_k = int(cls_raw.get("k", k_grid[-1]))
        if classify_k not in k_grid:
            raise ConfigError(f"classification.k={classify_k} is not on the K grid")
        ap_mode = met_raw.get("ap_mode", PAPER_LITERAL)
        for k in k_grid:
            ApConfig(k, step, ap_mode)

        cfg = PipelineConfig(
            aoi=aoi,
            precedence=precedence,
            paths=paths,
            catalog=catalog,
            generation=descriptor("generation"),
            classification=descriptor("classification"),
            embedding=embedding,
            signal_ratio=float(corpus_raw.get("signal_ratio", DEFAULT_SIGNAL_RATIO)),
            injection_rate=float(corpus_raw.get("injection_rate", DEFAULT_INJECTION_RATE)),
            seed=int(corpus_raw["seed"]),
            strategies=tuple(QueryStrategy.parse(s) for s in ret_raw.get("strategies", list(QueryStrategy))),
            k_grid=k_grid,
            classify_strategy=QueryStrategy.parse(cls_raw.get("strategy", "cif_plus_phrase")),
            classify_k=classify_k,
            ap_mode=ap_mode,
            step=step,
            config_hash=config_hash(raw),
            raw=raw,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    if not 0.0 < cfg.signal_ratio < 1.0:
        raise ConfigError("corpus.signal_ratio must be in (0, 1)")
    if not 0.0 <= cfg.injection_rate <= 1.0:
        raise ConfigError("corpus.injection_rate must be in [0, 1]")
    return cfg


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return parse_config(raw, path.resolve().parent)
