"""Labeled synthetic corpus: generation, tag parsing, timeline dispersal, noise mixing, name injection."""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .catalog import AreaOfInterest, Cif
from .errors import DataError, SchemaError
from .llm import GENERATE_TEMPERATURE, Backend, GenerationRequest, generate_many
from .prompts import render_generation_prompt, render_status_label_prompt
from .taxonomy import (
    SIX_HOUR_INTERVALS,
    ConsolidatedImpact,
    OperationalStatus,
    Severity,
    TimeInterval,
    consolidate_impact,
    parse_severity,
    parse_status_response,
)

log = logging.getLogger(__name__)

DEFAULT_SIGNAL_RATIO = 0.02
DEFAULT_INJECTION_RATE = 0.08
INJECTION_FORMAT = "{name}: {text}"

I = ConsolidatedImpact
DEFAULT_PRECEDENCE: tuple[ConsolidatedImpact, ...] = (
    I.DESTROYED, I.COLLAPSED, I.BURNT, I.FLOODED, I.SINKED, I.WASHED_AWAY, I.RUPTURED, I.TORN,
    I.UPROOTED, I.BLOWN, I.ERODED, I.CRACKED, I.WEAKENED, I.UNSAFE, I.LEAKAGE, I.BLOCKED,
    I.DISPLACED, I.SLIPPERY, I.FAILED, I.POWER_OUTAGE, I.DAMAGED, I.UNKNOWN_INAPPLICABLE,
)
del I

# Stream ids for numpy seed sequences; one per randomized step.
_NOISE_DRAW, _NOISE_INTERVAL, _ORDINALS, _INJECT = 1, 2, 3, 4


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class Tweet:
    id: str
    text: str
    is_signal: bool
    cif_id: str | None = None
    interval: TimeInterval | None = None
    ordinal: int | None = None
    injected: bool = False
    gt_raw_impact: str = ""
    gt_impact: ConsolidatedImpact = ConsolidatedImpact.UNKNOWN_INAPPLICABLE
    gt_severity: Severity = Severity.UNKNOWN
    gt_status: OperationalStatus = OperationalStatus.UNKNOWN

    def to_json(self) -> dict:
        row = asdict(self)
        for key in ("interval", "gt_impact", "gt_severity", "gt_status"):
            if row[key] is not None:
                row[key] = row[key].value
        return row

    @classmethod
    def from_json(cls, row: dict) -> "Tweet":
        return cls(
            id=str(row["id"]),
            text=row["text"],
            is_signal=bool(row["is_signal"]),
            cif_id=row.get("cif_id"),
            interval=None if row.get("interval") is None else TimeInterval(row["interval"]),
            ordinal=row.get("ordinal"),
            injected=bool(row.get("injected", False)),
            gt_raw_impact=row.get("gt_raw_impact", ""),
            gt_impact=ConsolidatedImpact(row.get("gt_impact", "unknown_inapplicable")),
            gt_severity=Severity(row.get("gt_severity", "unknown")),
            gt_status=OperationalStatus(row.get("gt_status", "unknown")),
        )


def noise_tweet(tweet_id: str, text: str, interval: TimeInterval | None = None) -> Tweet:
    return Tweet(id=tweet_id, text=text, is_signal=False, interval=interval)


@dataclass
class Corpus:
    aoi: str
    tweets: list[Tweet]
    seed: int
    signal_ratio_target: float = DEFAULT_SIGNAL_RATIO
    injection_rate: float = 0.0
    warnings: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def signal_count(self) -> int:
        return sum(t.is_signal for t in self.tweets)

    @property
    def achieved_ratio(self) -> float:
        return self.signal_count / len(self.tweets) if self.tweets else 0.0

    def by_id(self) -> dict[str, Tweet]:
        return {t.id: t for t in self.tweets}

    def header(self) -> dict:
        return {
            "aoi": self.aoi,
            "seed": self.seed,
            "signal_ratio_target": self.signal_ratio_target,
            "achieved_ratio": self.achieved_ratio,
            "injection_rate": self.injection_rate,
            "signal": self.signal_count,
            "total": len(self.tweets),
            "warnings": list(self.warnings),
            **self.meta,
        }


# -- generation & labelling -------------------------------------------------

_TAGS_RE = re.compile(
    r"\(\s*tags?\s*:\s*([^,()]*?)\s*,\s*([^,()]*?)\s*\)\s*\.?\s*$",
    re.IGNORECASE,
)
_ENUMERATOR_RE = re.compile(r"^\s*(?:\d+\s*[.)]|[-*•])\s+")


def parse_generated_tweets(response: str) -> tuple[list[tuple[str, str, str]], list[str]]:
    """Split a generation response into (text, raw_impact, raw_severity) triples.

    Blocks are separated by blank lines. A block whose tail is not a parseable
    ``(Tags: A, B)`` pair goes to the second list for manual handling.
    """
    parsed: list[tuple[str, str, str]] = []
    rejects: list[str] = []
    for block in re.split(r"\n\s*\n", response.strip()):
        block = block.strip()
        if not block:
            continue
        m = _TAGS_RE.search(block)
        if m is None or not m.group(1).strip() or not m.group(2).strip():
            rejects.append(block)
            continue
        text = _ENUMERATOR_RE.sub("", block[: m.start()]).strip()
        text = re.sub(r"\s+", " ", text)
        if not text:
            rejects.append(block)
            continue
        parsed.append((text, m.group(1).strip(), m.group(2).strip()))
    return parsed, rejects


def generate_signal(
    cifs: Sequence[Cif], aoi: AreaOfInterest, backend: Backend
) -> tuple[list[Tweet], list[dict]]:
    """Ask the backend for tweets about each CIF; returns signal tweets and rejected blocks."""
    reqs = [
        GenerationRequest(render_generation_prompt(cif, aoi), temperature=GENERATE_TEMPERATURE)
        for cif in cifs
    ]
    tweets: list[Tweet] = []
    rejects: list[dict] = []
    for cif, response in zip(cifs, generate_many(reqs, backend)):
        parsed, bad = parse_generated_tweets(response)
        rejects.extend({"cif_id": cif.id, "block": b} for b in bad)
        for j, (text, raw_impact, raw_severity) in enumerate(parsed, start=1):
            tweets.append(Tweet(
                id=f"{cif.id}-t{j:02d}",
                text=text,
                is_signal=True,
                cif_id=cif.id,
                gt_raw_impact=raw_impact,
                gt_impact=consolidate_impact(raw_impact),
                gt_severity=parse_severity(raw_severity),
            ))
    return tweets, rejects


def label_statuses(tweets: Sequence[Tweet], backend: Backend) -> list[Tweet]:
    reqs = [GenerationRequest(render_status_label_prompt(t.text)) for t in tweets]
    responses = generate_many(reqs, backend)
    return [replace(t, gt_status=parse_status_response(r)) for t, r in zip(tweets, responses)]


# -- timeline ---------------------------------------------------------------


def chunk_sizes(n: int, parts: int = len(SIX_HOUR_INTERVALS)) -> list[int]:
    base, extra = divmod(n, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def disperse_timeline(
    tweets_for_cif: Sequence[Tweet],
    precedence: Sequence[ConsolidatedImpact] = DEFAULT_PRECEDENCE,
) -> list[Tweet]:
    """Order one CIF's tweets by impact precedence and spread them over the four intervals.

    Returns the tweets in timeline order with ``interval`` and a per-interval
    ``ordinal`` filled in.
    """
    rank = {ConsolidatedImpact(label): i for i, label in enumerate(precedence)}
    missing = set(ConsolidatedImpact) - set(rank)
    if missing:
        raise ValueError(f"precedence is missing {sorted(m.value for m in missing)}")
    ordered = sorted(tweets_for_cif, key=lambda t: rank[t.gt_impact])  # stable
    out: list[Tweet] = []
    start = 0
    for interval, size in zip(SIX_HOUR_INTERVALS, chunk_sizes(len(ordered))):
        for ordinal, tweet in enumerate(ordered[start:start + size]):
            out.append(replace(tweet, interval=interval, ordinal=ordinal))
        start += size
    return out


def disperse_all(
    signal: Sequence[Tweet], precedence: Sequence[ConsolidatedImpact] = DEFAULT_PRECEDENCE
) -> list[Tweet]:
    """Disperse every CIF's tweets independently, keeping CIFs in first-seen order."""
    groups: dict[str, list[Tweet]] = {}
    for t in signal:
        groups.setdefault(t.cif_id, []).append(t)
    return [t for group in groups.values() for t in disperse_timeline(group, precedence)]


# -- noise ------------------------------------------------------------------


def load_noise_pool(path: str | Path) -> list[str]:
    """Noise texts from JSON-lines (``{"text": ...}``) or plain text, one tweet per line."""
    path = Path(path)
    texts = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("{"):
                try:
                    text = json.loads(line)["text"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise SchemaError(f"bad noise record: {exc}", line=lineno, path=str(path))
            else:
                text = line
            if not str(text).strip():
                raise SchemaError("empty noise text", line=lineno, path=str(path))
            texts.append(str(text))
    return texts


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def noise_needed(n_signal: int, target_ratio: float) -> int:
    return round_half_up(n_signal * (1.0 - target_ratio) / target_ratio)


def assign_ordinals(tweets: Sequence[Tweet], seed: int) -> list[Tweet]:
    """Give every tweet a corpus-wide position inside its interval.

    Signal tweets keep their relative order (so each CIF's timeline survives);
    noise is scattered among them by ``seed``.
    """
    rng = _rng(seed, _ORDINALS)
    out: list[Tweet] = []
    for interval in SIX_HOUR_INTERVALS:
        members = [t for t in tweets if t.interval is interval]
        # Incoming order is CIF-major and already chronological within each CIF.
        signal = [t for t in members if t.is_signal]
        noise = [t for t in members if not t.is_signal]
        slots = rng.permutation(len(members))
        signal_slots = np.sort(slots[: len(signal)])
        noise_slots = np.sort(slots[len(signal):])
        placed = [(int(s), t) for s, t in zip(signal_slots, signal)]
        placed += [(int(s), t) for s, t in zip(noise_slots, noise)]
        placed.sort(key=lambda p: p[0])
        out.extend(replace(t, ordinal=i) for i, t in placed)
    return out


def mix_noise(
    signal: Sequence[Tweet],
    noise_pool: Sequence[str],
    target_ratio: float = DEFAULT_SIGNAL_RATIO,
    seed: int = 0,
    aoi: str = "",
) -> Corpus:
    """Surround the dispersed signal with noise drawn from ``noise_pool``.

    Draws ``round(|signal| * (1 - r) / r)`` texts without replacement (fewer,
    with a recorded warning, if the pool is short) and drops each into a
    uniformly random interval.
    """
    if not 0.0 < target_ratio < 1.0:
        raise ValueError("target_ratio must be in (0, 1)")
    if not signal:
        raise DataError("cannot mix noise into an empty signal set: ratio undefined")
    if any(t.interval is None for t in signal):
        raise DataError("signal tweets must be dispersed over the timeline before mixing")
    warnings = []
    needed = noise_needed(len(signal), target_ratio)
    n = min(needed, len(noise_pool))
    if n < needed:
        msg = f"noise pool has {len(noise_pool)} tweets, {needed} needed for ratio {target_ratio}"
        log.warning(msg)
        warnings.append(msg)
    picks = _rng(seed, _NOISE_DRAW).choice(len(noise_pool), size=n, replace=False) if n else []
    slots = _rng(seed, _NOISE_INTERVAL).integers(0, len(SIX_HOUR_INTERVALS), size=n)
    width = max(6, len(str(n)))
    noise = [
        noise_tweet(f"n{i:0{width}d}", noise_pool[int(p)], SIX_HOUR_INTERVALS[int(s)])
        for i, (p, s) in enumerate(zip(picks, slots))
    ]
    tweets = assign_ordinals(list(signal) + noise, seed)
    return Corpus(aoi=aoi, tweets=tweets, seed=seed, signal_ratio_target=target_ratio,
                  warnings=warnings)


def inject_cif_names(
    corpus: Corpus, cifs: Sequence[Cif], rate: float = DEFAULT_INJECTION_RATE, seed: int = 0
) -> Corpus:
    """Prefix a CIF name to ``round(rate * noise)`` noise tweets in each interval.

    Injected tweets carry the CIF id and ``injected=True`` but stay noise.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must be in [0, 1]")
    if rate == 0.0:
        return corpus
    if not cifs:
        raise ValueError("no CIF names to inject")
    rng = _rng(seed, _INJECT)
    changed: dict[str, Tweet] = {}
    for interval in SIX_HOUR_INTERVALS:
        noise = sorted(
            (t for t in corpus.tweets if t.interval is interval and not t.is_signal),
            key=lambda t: t.ordinal,
        )
        k = round_half_up(rate * len(noise))
        if k == 0:
            continue
        for idx in rng.choice(len(noise), size=k, replace=False):
            tweet = noise[int(idx)]
            cif = cifs[int(rng.integers(len(cifs)))]
            changed[tweet.id] = replace(
                tweet,
                text=INJECTION_FORMAT.format(name=cif.name, text=tweet.text),
                cif_id=cif.id,
                injected=True,
            )
    tweets = [changed.get(t.id, t) for t in corpus.tweets]
    meta = dict(corpus.meta, injection_format=INJECTION_FORMAT)
    return replace(corpus, tweets=tweets, injection_rate=rate, meta=meta)


def build_corpus(
    signal: Sequence[Tweet],
    noise_pool: Sequence[str],
    cifs: Sequence[Cif],
    aoi: str,
    seed: int,
    target_ratio: float = DEFAULT_SIGNAL_RATIO,
    injection_rate: float = DEFAULT_INJECTION_RATE,
    precedence: Sequence[ConsolidatedImpact] = DEFAULT_PRECEDENCE,
) -> Corpus:
    dispersed = disperse_all(signal, precedence)
    corpus = mix_noise(dispersed, noise_pool, target_ratio, seed, aoi=aoi)
    return inject_cif_names(corpus, cifs, injection_rate, seed)


# -- ground truth -----------------------------------------------------------


def cif_timeline(corpus: Corpus | Iterable[Tweet], cif_id: str) -> list[Tweet]:
    tweets = corpus.tweets if isinstance(corpus, Corpus) else corpus
    mine = [t for t in tweets if t.is_signal and t.cif_id == cif_id and t.interval is not None]
    return sorted(mine, key=lambda t: (t.interval.code, t.ordinal))


def last_valid_status(statuses: Sequence[OperationalStatus]) -> OperationalStatus:
    for status in reversed(statuses):
        if status is not OperationalStatus.UNKNOWN:
            return status
    return OperationalStatus.UNKNOWN


def derive_overall_status_ground_truth(
    corpus: Corpus | Iterable[Tweet], cif_id: str, up_to_interval: TimeInterval
) -> OperationalStatus:
    """Status of the CIF's latest tweet up to ``up_to_interval``, skipping back over unknowns."""
    up_to_interval = TimeInterval(up_to_interval)
    limit = 3 if up_to_interval is TimeInterval.FULL_DAY else up_to_interval.code
    timeline = [t for t in cif_timeline(corpus, cif_id) if t.interval.code <= limit]
    return last_valid_status([t.gt_status for t in timeline])


# -- persistence ------------------------------------------------------------


def dump_jsonl(rows: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows)


def save_tweets(tweets: Sequence[Tweet], path: str | Path, meta: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = [{"meta": meta}] if meta is not None else []
    path.write_text(dump_jsonl(head + [t.to_json() for t in tweets]), encoding="utf-8")


def load_tweets(path: str | Path) -> tuple[dict | None, list[Tweet]]:
    path = Path(path)
    meta = None
    tweets = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                if lineno == 1 and "meta" in row:
                    meta = row["meta"]
                    continue
                tweet = Tweet.from_json(row)
            except (ValueError, KeyError, TypeError) as exc:
                raise SchemaError(f"bad tweet record: {exc}", line=lineno, path=str(path)) from exc
            if tweet.id in seen:
                raise SchemaError(f"duplicate tweet id {tweet.id!r}", line=lineno, path=str(path))
            seen.add(tweet.id)
            tweets.append(tweet)
    return meta, tweets


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    save_tweets(corpus.tweets, path, meta=corpus.header())


def load_corpus(path: str | Path) -> Corpus:
    meta, tweets = load_tweets(path)
    if meta is None:
        raise SchemaError("corpus file has no metadata header", line=1, path=str(path))
    known = {"aoi", "seed", "signal_ratio_target", "achieved_ratio", "injection_rate",
             "signal", "total", "warnings"}
    return Corpus(
        aoi=meta.get("aoi", ""),
        tweets=tweets,
        seed=int(meta.get("seed", 0)),
        signal_ratio_target=float(meta.get("signal_ratio_target", DEFAULT_SIGNAL_RATIO)),
        injection_rate=float(meta.get("injection_rate", 0.0)),
        warnings=list(meta.get("warnings", [])),
        meta={k: v for k, v in meta.items() if k not in known},
    )
