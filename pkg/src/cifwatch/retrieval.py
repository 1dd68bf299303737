"""CIF query formulations, retrieval runs over the K grid, and relevance judgments."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .catalog import AreaOfInterest, Cif
from .corpus import Tweet
from .embed import EmbeddingProvider, Hit, VectorIndex
from .errors import CifwatchError, DataError, SchemaError, add_context
from .taxonomy import ALL_INTERVALS, TimeInterval

DEFAULT_K_GRID: tuple[int, ...] = tuple(range(5, 51, 5))
DISASTER_PHRASE = "disaster impacts"


class QueryStrategy(str, Enum):
    CIF_ONLY = "cif_only"
    CIF_PLUS_TERMS = "cif_plus_terms"
    CIF_PLUS_PHRASE = "cif_plus_phrase"

    @classmethod
    def parse(cls, text: str) -> "QueryStrategy":
        aliases = {"cif": cls.CIF_ONLY, "cif+terms": cls.CIF_PLUS_TERMS, "cif+x": cls.CIF_PLUS_TERMS,
                   "cif+phrase": cls.CIF_PLUS_PHRASE}
        key = text.strip().casefold()
        if key in aliases:
            return aliases[key]
        return cls(key)


class Bucket(str, Enum):
    RELEVANT = "relevant"
    OTHER_CIF = "other_cif"
    NOISE = "noise"


def build_query(cif: Cif, strategy: QueryStrategy, aoi: AreaOfInterest) -> str:
    strategy = QueryStrategy(strategy)
    if strategy is QueryStrategy.CIF_ONLY:
        return cif.name
    if strategy is QueryStrategy.CIF_PLUS_PHRASE:
        return f"{cif.name} {DISASTER_PHRASE}"
    if not aoi.impact_terms:
        raise ValueError(f"{aoi.name} has no impact terms")
    return f"{cif.name} {', '.join(aoi.impact_terms)}"


def judge(tweet: Tweet, cif_id: str) -> Bucket:
    if not tweet.is_signal:
        return Bucket.NOISE
    return Bucket.RELEVANT if tweet.cif_id == cif_id else Bucket.OTHER_CIF


@dataclass(frozen=True)
class RankedEntry:
    tweet_id: str
    score: float
    relevant: bool
    bucket: Bucket


def judge_relevance(ranked: Sequence[Hit], cif_id: str, tweets: Mapping[str, Tweet]) -> list[RankedEntry]:
    out = []
    for hit in ranked:
        try:
            tweet = tweets[hit.tweet_id]
        except KeyError:
            raise DataError(f"retrieved tweet {hit.tweet_id} is not in the corpus") from None
        bucket = judge(tweet, cif_id)
        out.append(RankedEntry(hit.tweet_id, hit.score, bucket is Bucket.RELEVANT, bucket))
    return out


def relevant_total(tweets: Iterable[Tweet], cif_id: str, interval: TimeInterval) -> int:
    """Ground-truth relevant count R for a (CIF, interval) query."""
    interval = TimeInterval(interval)
    return sum(
        1 for t in tweets
        if t.is_signal and t.cif_id == cif_id
        and (interval is TimeInterval.FULL_DAY or t.interval is interval)
    )


@dataclass(frozen=True)
class RankedList:
    cif_id: str
    strategy: QueryStrategy
    interval: TimeInterval
    k: int
    ranked: tuple[RankedEntry, ...]
    n_relevant: int  # R: ground-truth relevant tweets for this query

    @property
    def flags(self) -> list[bool]:
        return [e.relevant for e in self.ranked]

    def to_json(self) -> dict:
        return {
            "cif_id": self.cif_id,
            "strategy": self.strategy.value,
            "interval": self.interval.value,
            "k": self.k,
            "n_relevant": self.n_relevant,
            "ranked": [
                {"tweet_id": e.tweet_id, "score": e.score, "relevant": e.relevant,
                 "bucket": e.bucket.value}
                for e in self.ranked
            ],
        }

    @classmethod
    def from_json(cls, row: dict) -> "RankedList":
        return cls(
            cif_id=row["cif_id"],
            strategy=QueryStrategy(row["strategy"]),
            interval=TimeInterval(row["interval"]),
            k=int(row["k"]),
            ranked=tuple(
                RankedEntry(e["tweet_id"], float(e["score"]), bool(e["relevant"]), Bucket(e["bucket"]))
                for e in row["ranked"]
            ),
            n_relevant=int(row.get("n_relevant", 0)),
        )


@dataclass
class RetrievalRun:
    aoi: str
    strategy: QueryStrategy
    k_grid: tuple[int, ...]
    intervals: tuple[TimeInterval, ...]
    lists: list[RankedList] = field(default_factory=list)

    def get(self, cif_id: str, interval: TimeInterval, k: int) -> RankedList:
        for rl in self.lists:
            if rl.cif_id == cif_id and rl.interval is interval and rl.k == k:
                return rl
        raise KeyError((cif_id, interval, k))

    def at_k(self, k: int) -> list[RankedList]:
        return [rl for rl in self.lists if rl.k == k]


def validate_k_grid(k_grid: Sequence[int], step: int = 5) -> tuple[int, ...]:
    grid = tuple(int(k) for k in k_grid)
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"K grid must be non-empty and strictly increasing: {grid}")
    if any(k < step or k % step for k in grid):
        raise ValueError(f"K grid values must be positive multiples of {step}: {grid}")
    return grid


def run_retrieval(
    index: VectorIndex,
    catalog: Sequence[Cif],
    strategy: QueryStrategy,
    provider: EmbeddingProvider,
    tweets: Mapping[str, Tweet],
    aoi: AreaOfInterest,
    k_grid: Sequence[int] = DEFAULT_K_GRID,
    intervals: Sequence[TimeInterval] = ALL_INTERVALS,
    step: int = 5,
) -> RetrievalRun:
    """Query every (CIF, interval) once at the largest K and slice the ranking for smaller K."""
    strategy = QueryStrategy(strategy)
    grid = validate_k_grid(k_grid, step)
    if provider.dim() != index.dim:
        raise DataError(f"provider dim {provider.dim()} != index dim {index.dim}")
    run = RetrievalRun(aoi.name, strategy, grid, tuple(TimeInterval(i) for i in intervals))
    signal = [t for t in tweets.values() if t.is_signal]
    for cif in catalog:
        try:
            query = provider.embed(build_query(cif, strategy, aoi))
        except CifwatchError as exc:
            raise add_context(exc, f"cif {cif.id}")
        mine = [t for t in signal if t.cif_id == cif.id]
        for interval in run.intervals:
            try:
                hits = index.search(query, grid[-1], interval)
                judged = judge_relevance(hits, cif.id, tweets)
            except CifwatchError as exc:
                raise add_context(exc, f"cif {cif.id}, interval {interval.value}")
            r = relevant_total(mine, cif.id, interval)
            for k in grid:
                run.lists.append(RankedList(cif.id, strategy, interval, k, tuple(judged[:k]), r))
    return run


def save_run(run: RetrievalRun, path: str | Path, meta: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "aoi": run.aoi,
        "strategy": run.strategy.value,
        "k_grid": list(run.k_grid),
        "intervals": [i.value for i in run.intervals],
        **(meta or {}),
    }
    lines = [json.dumps({"meta": header}, ensure_ascii=False)]
    lines += [json.dumps(rl.to_json(), ensure_ascii=False) for rl in run.lists]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_run(path: str | Path) -> tuple[dict, RetrievalRun]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        rows = [(n, line) for n, line in enumerate(fh, start=1) if line.strip()]
    if not rows:
        raise SchemaError("empty run file", path=str(path))
    try:
        meta = json.loads(rows[0][1])["meta"]
        run = RetrievalRun(
            meta["aoi"], QueryStrategy(meta["strategy"]), tuple(meta["k_grid"]),
            tuple(TimeInterval(i) for i in meta["intervals"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaError(f"bad run header: {exc}", line=1, path=str(path)) from exc
    for lineno, line in rows[1:]:
        try:
            run.lists.append(RankedList.from_json(json.loads(line)))
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaError(f"bad ranked list: {exc}", line=lineno, path=str(path)) from exc
    return meta, run
