"""Zero-shot impact/severity/status classification and overall CIF status inference."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .llm import Backend, GenerationRequest, generate_many
from .prompts import render_impact_prompt, render_overall_status_prompt, render_status_classify_prompt
from .taxonomy import (
    ConsolidatedImpact,
    OperationalStatus,
    Severity,
    TimeInterval,
    consolidate_impact,
    parse_severity,
    parse_status_response,
)

_IMPACT_LINE = re.compile(r"infrastructure[\s_]+impact\s*:[ \t]*(.*)", re.IGNORECASE)
_SEVERITY_LINE = re.compile(r"infrastructure[\s_]+severity\s*:[ \t]*(.*)", re.IGNORECASE)


@dataclass(frozen=True)
class ImpactSeverityPrediction:
    raw_model_impact: str
    impact: ConsolidatedImpact
    severity: Severity


@dataclass(frozen=True)
class OverallStatusPrediction:
    cif_id: str
    interval: TimeInterval
    status: OperationalStatus
    evidence_tweet_ids: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "cif_id": self.cif_id,
            "interval": self.interval.value,
            "status": self.status.value,
            "evidence_tweet_ids": list(self.evidence_tweet_ids),
        }


def _first_value(text: str) -> str:
    return re.split(r"[,;/\n]| and ", text.strip(), maxsplit=1)[0].strip()


def parse_impact_response(response: str) -> ImpactSeverityPrediction:
    """Read the impact and severity lines; anything unparseable is the unknown prediction."""
    impact_m = _IMPACT_LINE.search(response)
    severity_m = _SEVERITY_LINE.search(response)
    if impact_m is None:
        return ImpactSeverityPrediction("", ConsolidatedImpact.UNKNOWN_INAPPLICABLE, Severity.UNKNOWN)
    raw = impact_m.group(1).strip()
    impact = consolidate_impact(_first_value(raw))
    severity = parse_severity(_first_value(severity_m.group(1))) if severity_m else Severity.UNKNOWN
    return ImpactSeverityPrediction(raw, impact, severity)


def classify_impact_severity(tweet_text: str, backend: Backend) -> ImpactSeverityPrediction:
    return classify_impact_severity_many([tweet_text], backend)[0]


def classify_impact_severity_many(texts: Sequence[str], backend: Backend) -> list[ImpactSeverityPrediction]:
    responses = generate_many([GenerationRequest(render_impact_prompt(t)) for t in texts], backend)
    return [parse_impact_response(r) for r in responses]


def classify_operational_status(tweet_text: str, backend: Backend) -> OperationalStatus:
    return classify_operational_status_many([tweet_text], backend)[0]


def classify_operational_status_many(texts: Sequence[str], backend: Backend) -> list[OperationalStatus]:
    reqs = [GenerationRequest(render_status_classify_prompt(t)) for t in texts]
    return [parse_status_response(r) for r in generate_many(reqs, backend)]


def infer_overall_status(
    cif_id: str,
    cif_name: str,
    interval: TimeInterval,
    tweets: Sequence[tuple[str, str]],
    backend: Backend,
) -> OverallStatusPrediction:
    """Infer one CIF's status from ``(tweet_id, text)`` pairs in retrieval order.

    An empty list yields ``unknown`` without calling the backend.
    """
    ids = tuple(tid for tid, _ in tweets)
    if not tweets:
        return OverallStatusPrediction(cif_id, interval, OperationalStatus.UNKNOWN, ids)
    prompt = render_overall_status_prompt(cif_name, [text for _, text in tweets])
    status = parse_status_response(backend.complete(GenerationRequest(prompt)))
    return OverallStatusPrediction(cif_id, interval, status, ids)
