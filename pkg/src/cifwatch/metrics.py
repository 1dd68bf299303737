"""Ranked-retrieval and classification metrics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

from .errors import ConfigError

PAPER_LITERAL = "paper_literal"
STANDARD = "standard"


@dataclass(frozen=True)
class ApConfig:
    k: int
    step: int = 5
    mode: str = PAPER_LITERAL

    def __post_init__(self):
        if self.mode not in (PAPER_LITERAL, STANDARD):
            raise ConfigError(f"unknown AP mode {self.mode!r}")
        if self.step < 1 or self.k < 1:
            raise ConfigError("k and step must be positive")
        if self.mode == PAPER_LITERAL and self.k % self.step:
            raise ConfigError(f"K={self.k} is not a multiple of step {self.step}")


def average_precision_at_k(rel: Sequence[bool], n_relevant: int, cfg: ApConfig) -> float:
    """AP@K of a judged ranking.

    ``rel[i]`` is the relevance of rank ``i + 1``; ranks missing from ``rel``
    count as irrelevant and ranks past K are ignored. The sum of P@k * rel@k
    is taken only at k = step, 2*step, ..., K in paper-literal mode and at
    every k <= K in standard mode; both divide by min(K, n_relevant) and
    return 0 when that is 0.
    """
    if n_relevant < 0:
        raise ValueError("n_relevant must be >= 0")
    gtp = min(cfg.k, n_relevant)
    if gtp == 0:
        return 0.0
    ranks = range(cfg.step, cfg.k + 1, cfg.step) if cfg.mode == PAPER_LITERAL else range(1, cfg.k + 1)
    wanted = set(ranks)
    hits = 0
    total = 0.0
    for k in range(1, cfg.k + 1):
        is_rel = k <= len(rel) and bool(rel[k - 1])
        hits += is_rel
        if is_rel and k in wanted:
            total += hits / k
    return total / gtp


def map_at_k(aps: Sequence[float]) -> float:
    if not aps:
        raise ValueError("mean of an empty AP list is undefined")
    return sum(aps) / len(aps)


def hit_rate(flags: Iterable[Iterable[bool]]) -> float:
    """Relevant retrieved / total retrieved over a collection of judged rankings."""
    relevant = total = 0
    for ranking in flags:
        for f in ranking:
            total += 1
            relevant += bool(f)
    return relevant / total if total else 0.0


# -- classification ---------------------------------------------------------


@dataclass(frozen=True)
class ClassScores:
    label: Hashable
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class PrfReport:
    per_class: tuple[ClassScores, ...]
    precision: float
    recall: float
    f1: float
    n: int
    averaging: str = "macro"

    def to_json(self) -> dict:
        return {
            "averaging": self.averaging,
            "n": self.n,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_class": [
                {"label": _name(c.label), "precision": c.precision, "recall": c.recall,
                 "f1": c.f1, "support": c.support}
                for c in self.per_class
            ],
        }


def _name(label) -> str:
    return getattr(label, "value", label)


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


def _ratio(a: int, b: int) -> float:
    return a / b if b else 0.0


def _check_labels(labels: Iterable, allowed: set, which: str) -> None:
    for lab in labels:
        if lab not in allowed:
            raise ValueError(f"{which} label {_name(lab)!r} is not in the label set")


@dataclass(frozen=True)
class ConfusionMatrix:
    labels: tuple
    counts: tuple[tuple[int, ...], ...]  # counts[true][pred]

    @property
    def total(self) -> int:
        return sum(map(sum, self.counts))

    def support(self, i: int) -> int:
        return sum(self.counts[i])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred"] + [_name(lab) for lab in self.labels])
        for lab, row in zip(self.labels, self.counts):
            w.writerow([_name(lab)] + list(row))
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"labels": [_name(lab) for lab in self.labels], "counts": [list(r) for r in self.counts]}


def confusion_matrix(true: Sequence, pred: Sequence, label_set: Sequence) -> ConfusionMatrix:
    if len(true) != len(pred):
        raise ValueError(f"length mismatch: {len(true)} true vs {len(pred)} predicted")
    labels = tuple(label_set)
    pos = {lab: i for i, lab in enumerate(labels)}
    _check_labels(true, set(pos), "true")
    _check_labels(pred, set(pos), "predicted")
    counts = [[0] * len(labels) for _ in labels]
    for t, p in zip(true, pred):
        counts[pos[t]][pos[p]] += 1
    return ConfusionMatrix(labels, tuple(tuple(r) for r in counts))


def prf_from_confusion(cm: ConfusionMatrix) -> PrfReport:
    """Per-class one-vs-rest scores; macro means over classes with nonzero support."""
    per_class = []
    for i, lab in enumerate(cm.labels):
        support = cm.support(i)
        if support == 0:
            continue
        tp = cm.counts[i][i]
        predicted = sum(row[i] for row in cm.counts)
        p, r = _ratio(tp, predicted), _ratio(tp, support)
        per_class.append(ClassScores(lab, p, r, _f1(p, r), support))
    n = len(per_class)
    return PrfReport(
        per_class=tuple(per_class),
        precision=sum(c.precision for c in per_class) / n if n else 0.0,
        recall=sum(c.recall for c in per_class) / n if n else 0.0,
        f1=sum(c.f1 for c in per_class) / n if n else 0.0,
        n=cm.total,
    )


def prf_scores(true: Sequence, pred: Sequence, label_set: Sequence) -> PrfReport:
    """Macro precision/recall/F1 computed directly from the label sequences."""
    if len(true) != len(pred):
        raise ValueError(f"length mismatch: {len(true)} true vs {len(pred)} predicted")
    labels = list(label_set)
    _check_labels(true, set(labels), "true")
    _check_labels(pred, set(labels), "predicted")
    per_class = []
    for lab in labels:
        support = sum(1 for t in true if t == lab)
        if support == 0:
            continue
        tp = sum(1 for t, p in zip(true, pred) if t == lab and p == lab)
        predicted = sum(1 for p in pred if p == lab)
        p, r = _ratio(tp, predicted), _ratio(tp, support)
        per_class.append(ClassScores(lab, p, r, _f1(p, r), support))
    n = len(per_class)
    return PrfReport(
        per_class=tuple(per_class),
        precision=sum(c.precision for c in per_class) / n if n else 0.0,
        recall=sum(c.recall for c in per_class) / n if n else 0.0,
        f1=sum(c.f1 for c in per_class) / n if n else 0.0,
        n=len(true),
    )
