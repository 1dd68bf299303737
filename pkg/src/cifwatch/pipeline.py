"""Stage-by-stage experiment orchestration. Every stage reads and writes files."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import catalog as cat
from .classify import (
    OverallStatusPrediction,
    classify_impact_severity_many,
    classify_operational_status_many,
    infer_overall_status,
)
from .config import PipelineConfig
from .corpus import (
    Corpus,
    Tweet,
    build_corpus,
    derive_overall_status_ground_truth,
    dump_jsonl,
    generate_signal,
    label_statuses,
    load_corpus,
    load_noise_pool,
    load_tweets,
    save_corpus,
    save_tweets,
)
from .embed import HashingEmbedder, RemoteEmbedder, index_corpus, load_index, save_index
from .errors import CifwatchError, ConfigError, DataError, SchemaError, StageError
from .llm import Backend, make_backend
from .metrics import (
    ApConfig,
    average_precision_at_k,
    confusion_matrix,
    hit_rate,
    map_at_k,
    prf_from_confusion,
)
from .reference import reference_for
from .retrieval import Bucket, QueryStrategy, RetrievalRun, load_run, run_retrieval, save_run
from .taxonomy import ALL_INTERVALS, ConsolidatedImpact, OperationalStatus, Severity, TimeInterval

log = logging.getLogger(__name__)

TASK_LABELS = {
    "impact": tuple(ConsolidatedImpact),
    "severity": tuple(Severity),
    "status": tuple(OperationalStatus),
}


# -- artifact bookkeeping ----------------------------------------------------


def stage_meta(cfg: PipelineConfig, stage: str, **extra) -> dict:
    return {"stage": stage, "config_hash": cfg.config_hash, **extra}


def check_meta(cfg: PipelineConfig, meta: dict | None, path: Path) -> None:
    if meta is None:
        raise SchemaError("artifact has no metadata header", path=str(path))
    found = meta.get("config_hash")
    if found != cfg.config_hash:
        raise DataError(
            f"{path} was built under config {found}, current config is {cfg.config_hash}; "
            "re-run the earlier stages"
        )


def _require(path: Path | None, what: str) -> Path:
    if path is None:
        raise ConfigError(f"no path configured for {what}")
    if not path.exists():
        raise DataError(f"{what} not found at {path}")
    return path


def read_jsonl_with_meta(path: Path) -> tuple[dict | None, list[dict]]:
    meta, rows = None, []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc}", line=lineno, path=str(path)) from exc
            if lineno == 1 and "meta" in row:
                meta = row["meta"]
            else:
                rows.append(row)
    return meta, rows


def write_jsonl(path: Path, rows: Sequence[dict], meta: dict | None = None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    head = [{"meta": meta}] if meta is not None else []
    path.write_text(dump_jsonl(head + list(rows)), encoding="utf-8")


def embedder(cfg: PipelineConfig):
    e = cfg.embedding
    if e.provider == "mock":
        return HashingEmbedder(e.dim, e.seed)
    return RemoteEmbedder(e.endpoint, e.model or "", e.dim)


# -- stages -------------------------------------------------------------------


def stage_fetch_cifs(cfg: PipelineConfig) -> list[cat.Cif]:
    settings = cfg.catalog
    if settings.source == "live":
        source = cat.LiveSource(
            endpoint=settings.endpoint or cat.DEFAULT_ENDPOINT,
            cache_dir=settings.cache_dir,
            delay_ms=settings.delay_ms,
        )
    else:
        source = cat.FixtureSource(settings.fixture)
    cifs = select_cifs(cfg, cat.fetch_cifs(cfg.aoi, settings.categories, source))
    cat.save_catalog(cifs, cfg.path("catalog"))
    return cifs


def select_cifs(cfg: PipelineConfig, cifs: Sequence[cat.Cif]) -> list[cat.Cif]:
    settings = cfg.catalog
    if settings.ids is not None:
        by_id = {c.id: c for c in cifs}
        missing = [i for i in settings.ids if i not in by_id]
        if missing:
            raise ConfigError(f"catalog.ids not in the catalog: {missing}")
        cifs = [by_id[i] for i in settings.ids]
    if settings.limit is not None:
        cifs = cifs[: settings.limit]
    return list(cifs)


def stage_generate(cfg: PipelineConfig, backend: Backend | None = None) -> list[Tweet]:
    cifs = cat.load_catalog(_require(cfg.path("catalog"), "CIF catalog"))
    backend = backend or make_backend(cfg.backend("generation"))
    tweets, rejects = generate_signal(cifs, cfg.aoi, backend)
    save_tweets(tweets, cfg.path("signal_raw"), stage_meta(cfg, "generate", rejects=len(rejects)))
    write_jsonl(cfg.path("rejects"), rejects, stage_meta(cfg, "generate"))
    return tweets


def stage_label_status(cfg: PipelineConfig, backend: Backend | None = None) -> list[Tweet]:
    path = _require(cfg.path("signal_raw"), "generated signal tweets")
    meta, tweets = load_tweets(path)
    check_meta(cfg, meta, path)
    labeled = label_statuses(tweets, backend or make_backend(cfg.backend("generation")))
    save_tweets(labeled, cfg.path("signal"), stage_meta(cfg, "label-status"))
    return labeled


def stage_build_timeline(cfg: PipelineConfig) -> Corpus:
    path = _require(cfg.path("signal"), "status-labeled signal tweets")
    meta, signal = load_tweets(path)
    check_meta(cfg, meta, path)
    cifs = cat.load_catalog(_require(cfg.path("catalog"), "CIF catalog"))
    pool = load_noise_pool(_require(cfg.paths.get("noise_pool"), "noise pool"))
    corpus = build_corpus(
        signal, pool, cifs, cfg.aoi.name, cfg.seed,
        cfg.signal_ratio, cfg.injection_rate, cfg.precedence,
    )
    corpus.meta["config_hash"] = cfg.config_hash
    save_corpus(corpus, cfg.path("corpus"))
    return corpus


def load_checked_corpus(cfg: PipelineConfig) -> Corpus:
    path = _require(cfg.path("corpus"), "corpus")
    corpus = load_corpus(path)
    check_meta(cfg, corpus.meta, path)
    return corpus


def _index_meta_path(index_path: Path) -> Path:
    return index_path.with_name(index_path.name + ".meta.json")


def stage_index(cfg: PipelineConfig):
    corpus = load_checked_corpus(cfg)
    provider = embedder(cfg)
    index = index_corpus(corpus, provider)
    save_index(index, cfg.path("index"))
    meta = stage_meta(cfg, "index", records=len(index), **provider.describe())
    _index_meta_path(cfg.path("index")).write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return index


def load_checked_index(cfg: PipelineConfig):
    path = _require(cfg.path("index"), "vector index")
    meta_path = _index_meta_path(path)
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else None
    check_meta(cfg, meta, meta_path)
    return load_index(path)


def stage_retrieve(cfg: PipelineConfig, strategies: Sequence[QueryStrategy] | None = None) -> list[RetrievalRun]:
    corpus = load_checked_corpus(cfg)
    index = load_checked_index(cfg)
    cifs = cat.load_catalog(_require(cfg.path("catalog"), "CIF catalog"))
    provider = embedder(cfg)
    tweets = corpus.by_id()
    runs = []
    for strategy in strategies or cfg.strategies:
        run = run_retrieval(index, cifs, strategy, provider, tweets, cfg.aoi,
                            cfg.k_grid, ALL_INTERVALS, cfg.step)
        save_run(run, cfg.run_path(strategy), stage_meta(cfg, "retrieve"))
        runs.append(run)
    return runs


def load_checked_run(cfg: PipelineConfig, strategy: QueryStrategy) -> RetrievalRun:
    path = _require(cfg.run_path(strategy), f"{QueryStrategy(strategy).value} retrieval run")
    meta, run = load_run(path)
    check_meta(cfg, meta, path)
    return run


def classification_targets(corpus: Corpus, run: RetrievalRun, k: int) -> list[Tweet]:
    """Every signal tweet plus every tweet retrieved at ``k``, in corpus order."""
    wanted = {t.id for t in corpus.tweets if t.is_signal}
    for rl in run.at_k(k):
        wanted.update(e.tweet_id for e in rl.ranked)
    return [t for t in corpus.tweets if t.id in wanted]


def stage_classify(cfg: PipelineConfig, backend: Backend | None = None) -> list[dict]:
    corpus = load_checked_corpus(cfg)
    run = load_checked_run(cfg, cfg.classify_strategy)
    targets = classification_targets(corpus, run, cfg.classify_k)
    backend = backend or make_backend(cfg.backend("classification"))
    texts = [t.text for t in targets]
    impacts = classify_impact_severity_many(texts, backend)
    statuses = classify_operational_status_many(texts, backend)
    rows = [
        {
            "tweet_id": t.id,
            "raw_model_impact": pred.raw_model_impact,
            "impact": pred.impact.value,
            "severity": pred.severity.value,
            "status": status.value,
        }
        for t, pred, status in zip(targets, impacts, statuses)
    ]
    meta = stage_meta(cfg, "classify", strategy=cfg.classify_strategy.value, k=cfg.classify_k)
    write_jsonl(cfg.path("predictions"), rows, meta)
    return rows


def load_checked_predictions(cfg: PipelineConfig) -> dict[str, dict]:
    path = _require(cfg.path("predictions"), "predictions")
    meta, rows = read_jsonl_with_meta(path)
    check_meta(cfg, meta, path)
    try:
        return {r["tweet_id"]: r for r in rows}
    except KeyError as exc:
        raise SchemaError(f"prediction without {exc}", path=str(path)) from None


def stage_status(cfg: PipelineConfig, backend: Backend | None = None) -> list[OverallStatusPrediction]:
    """Infer each CIF's status per interval from retrieved tweets that carry a predicted impact."""
    corpus = load_checked_corpus(cfg)
    run = load_checked_run(cfg, cfg.classify_strategy)
    predictions = load_checked_predictions(cfg)
    cifs = {c.id: c for c in cat.load_catalog(_require(cfg.path("catalog"), "CIF catalog"))}
    texts = {t.id: t.text for t in corpus.tweets}
    backend = backend or make_backend(cfg.backend("classification"))
    out = []
    for rl in run.at_k(cfg.classify_k):
        evidence = []
        for entry in rl.ranked:
            pred = predictions.get(entry.tweet_id)
            if pred is None:
                raise DataError(f"no prediction for retrieved tweet {entry.tweet_id}")
            if pred["impact"] != ConsolidatedImpact.UNKNOWN_INAPPLICABLE.value:
                evidence.append((entry.tweet_id, texts[entry.tweet_id]))
        out.append(infer_overall_status(rl.cif_id, cifs[rl.cif_id].name, rl.interval, evidence, backend))
    write_jsonl(cfg.path("overall_status"), [p.to_json() for p in out],
                stage_meta(cfg, "status", strategy=cfg.classify_strategy.value, k=cfg.classify_k))
    return out


# -- evaluation -----------------------------------------------------------------


@dataclass
class ExperimentReport:
    meta: dict
    counts: dict
    retrieval: dict
    classification: dict
    overall_status: dict
    reference: dict
    confusion: dict = field(default_factory=dict)  # name -> ConfusionMatrix
    prf: dict = field(default_factory=dict)  # name -> PrfReport

    def to_json(self) -> dict:
        return {
            "meta": self.meta,
            "counts": self.counts,
            "retrieval": self.retrieval,
            "classification": self.classification,
            "overall_status": self.overall_status,
            "reference": self.reference,
        }


def evaluate_retrieval(cfg: PipelineConfig, run: RetrievalRun) -> dict:
    kmax = run.k_grid[-1]
    by_key = {(rl.interval, rl.k): [] for rl in run.lists}
    for rl in run.lists:
        by_key[(rl.interval, rl.k)].append(rl)
    table = {}
    for interval in run.intervals:
        row = {}
        for k in run.k_grid:
            cfg_k = ApConfig(k, cfg.step, cfg.ap_mode)
            aps = [average_precision_at_k(rl.flags, rl.n_relevant, cfg_k)
                   for rl in by_key.get((interval, k), [])]
            row[str(k)] = map_at_k(aps) if aps else None
        table[interval.value] = row
    full = by_key.get((TimeInterval.FULL_DAY, kmax), [])
    breakdown = []
    for rl in full:
        counts = {b.value: 0 for b in Bucket}
        for e in rl.ranked:
            counts[e.bucket.value] += 1
        breakdown.append({"cif_id": rl.cif_id, **counts, "retrieved": len(rl.ranked)})
    return {
        "k_grid": list(run.k_grid),
        "map": table,
        "relevant_retrieved_full_day": sum(sum(rl.flags) for rl in full),
        "hit_rate": hit_rate(rl.flags for rl in run.at_k(kmax)),
        "breakdown": breakdown,
    }


def _task_truth(tweet: Tweet, task: str):
    return {"impact": tweet.gt_impact, "severity": tweet.gt_severity, "status": tweet.gt_status}[task]


def _task_pred(row: dict, task: str):
    return {"impact": ConsolidatedImpact, "severity": Severity, "status": OperationalStatus}[task](row[task])


def evaluate(cfg: PipelineConfig) -> ExperimentReport:
    corpus = load_checked_corpus(cfg)
    tweets = corpus.by_id()
    runs = {s: load_checked_run(cfg, s) for s in cfg.strategies}
    if cfg.classify_strategy not in runs:
        runs[cfg.classify_strategy] = load_checked_run(cfg, cfg.classify_strategy)
    predictions = load_checked_predictions(cfg)
    overall_path = _require(cfg.path("overall_status"), "overall status predictions")
    overall_meta, overall_rows = read_jsonl_with_meta(overall_path)
    check_meta(cfg, overall_meta, overall_path)

    retrieval = {s.value: evaluate_retrieval(cfg, runs[s]) for s in cfg.strategies}
    for run in runs.values():
        for rl in run.lists:
            for e in rl.ranked:
                if e.tweet_id not in tweets:
                    raise DataError(f"retrieved tweet {e.tweet_id} is not in the corpus")

    confusion, prf, classification = {}, {}, {}
    signal = [t for t in corpus.tweets if t.is_signal]
    retrieved = [
        tweets[e.tweet_id]
        for rl in runs[cfg.classify_strategy].at_k(cfg.classify_k)
        for e in rl.ranked
    ]
    for subset, members in (("signal", signal), ("retrieved", retrieved)):
        classification[subset] = {}
        for task, labels in TASK_LABELS.items():
            true = [_task_truth(t, task) for t in members]
            pred = [_task_pred(predictions[t.id], task) for t in members]
            cm = confusion_matrix(true, pred, labels)
            report = prf_from_confusion(cm)
            name = f"{subset}_{task}"
            confusion[name], prf[name] = cm, report
            classification[subset][task] = {"prf": report.to_json(), "confusion": cm.to_json()}

    truth, pred = [], []
    for row in overall_rows:
        interval = TimeInterval(row["interval"])
        truth.append(derive_overall_status_ground_truth(corpus, row["cif_id"], interval))
        pred.append(OperationalStatus(row["status"]))
    cm = confusion_matrix(truth, pred, TASK_LABELS["status"])
    confusion["overall_status"], prf["overall_status"] = cm, prf_from_confusion(cm)
    overall = {
        "aoi": cfg.aoi.name,
        "strategy": cfg.classify_strategy.value,
        "k": cfg.classify_k,
        "prf": prf["overall_status"].to_json(),
        "confusion": cm.to_json(),
    }

    counts = {
        "cifs": len({t.cif_id for t in signal}),
        "signal": len(signal),
        "noise": len(corpus.tweets) - len(signal),
        "injected": sum(t.injected for t in corpus.tweets),
        "total": len(corpus.tweets),
        "achieved_signal_ratio": corpus.achieved_ratio,
        "predictions": len(predictions),
    }
    meta = {
        "aoi": cfg.aoi.name,
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "ap_mode": cfg.ap_mode,
        "step": cfg.step,
        "strategies": [s.value for s in cfg.strategies],
        "intervals": [i.value for i in ALL_INTERVALS],
    }
    return ExperimentReport(meta, counts, retrieval, classification, overall,
                            reference_for(cfg.aoi.name), confusion, prf)


def _csv(rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def emit_reports(report: ExperimentReport, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    files["report.json"] = json.dumps(report.to_json(), indent=2, ensure_ascii=False) + "\n"

    curves = [("strategy", "interval", "k", "map")]
    for strategy, block in report.retrieval.items():
        for interval, row in block["map"].items():
            curves.extend((strategy, interval, k, value) for k, value in row.items())
    files["map_curves.csv"] = _csv(curves)

    breakdown = [("strategy", "cif_id", "relevant", "other_cif", "noise", "retrieved")]
    for strategy, block in report.retrieval.items():
        breakdown.extend(
            (strategy, b["cif_id"], b["relevant"], b["other_cif"], b["noise"], b["retrieved"])
            for b in block["breakdown"]
        )
    files["retrieval_breakdown.csv"] = _csv(breakdown)

    for name, cm in report.confusion.items():
        files[f"confusion_{name}.csv"] = cm.to_csv()
    for name, prf in report.prf.items():
        if name == "overall_status":
            rows = [("aoi", "precision", "recall", "f1"),
                    (report.meta["aoi"], prf.precision, prf.recall, prf.f1)]
        else:
            rows = [("label", "precision", "recall", "f1", "support")]
            rows += [(c.label.value, c.precision, c.recall, c.f1, c.support) for c in prf.per_class]
            rows.append(("macro", prf.precision, prf.recall, prf.f1, prf.n))
        files[f"prf_{name}.csv"] = _csv(rows)

    written = []
    for name in sorted(files):
        path = out / name
        path.write_text(files[name], encoding="utf-8")
        written.append(path)
    return written


def stage_evaluate(cfg: PipelineConfig) -> ExperimentReport:
    report = evaluate(cfg)
    emit_reports(report, cfg.path("reports"))
    return report


STAGES = (
    ("fetch-cifs", stage_fetch_cifs, "catalog"),
    ("generate", stage_generate, "signal_raw"),
    ("label-status", stage_label_status, "signal"),
    ("build-timeline", stage_build_timeline, "corpus"),
    ("index", stage_index, "index"),
    ("retrieve", stage_retrieve, "runs"),
    ("classify", stage_classify, "predictions"),
    ("status", stage_status, "overall_status"),
    ("evaluate", stage_evaluate, "reports"),
)


# Stages that call a text-generation backend, and which configured one they use.
BACKEND_ROLES = {
    "generate": "generation",
    "label-status": "generation",
    "classify": "classification",
    "status": "classification",
}


def run_stage(cfg: PipelineConfig, name: str, backends: dict[str, Backend] | None = None):
    """Run one stage; ``backends`` maps a role to a ready backend, overriding the config."""
    for stage, fn, artifact in STAGES:
        if stage == name:
            try:
                role = BACKEND_ROLES.get(stage)
                if role and backends and role in backends:
                    return fn(cfg, backends[role])
                return fn(cfg)
            except StageError:
                raise
            except CifwatchError as exc:
                raise StageError(stage, str(cfg.paths[artifact]), exc) from exc
    raise ConfigError(f"unknown stage {name!r}")


def run_all(cfg: PipelineConfig, backends: dict[str, Backend] | None = None) -> ExperimentReport:
    result = None
    for stage, _, _ in STAGES:
        log.info("stage %s", stage)
        result = run_stage(cfg, stage, backends)
    return result


def query_slots(cfg: PipelineConfig, cifs: Sequence[cat.Cif]) -> dict[str, int]:
    """Number of (CIF, interval) queries each strategy will issue."""
    return {s.value: len(cifs) * len(ALL_INTERVALS) for s in cfg.strategies}
