import pytest

from cifwatch.classify import (
    classify_impact_severity,
    classify_operational_status,
    infer_overall_status,
    parse_impact_response,
)
from cifwatch.llm import MockBackend, prompt_hash
from cifwatch.prompts import render_impact_prompt, render_overall_status_prompt, render_status_classify_prompt
from cifwatch.taxonomy import ConsolidatedImpact as I, OperationalStatus as S, Severity, TimeInterval

RADIOLOGY = ("The Christchurch Public Hospital's radiology equipment is malfunctioning due to the "
             "earthquake, making it difficult to diagnose patients. #ChristchurchEarthquake")
WIGRAM = ("Ground shake from Christchurch earthquake caused significant damage to Wigram Fire "
          "Station's foundation, rendering it unstable. #ChristchurchEarthquake")


@pytest.mark.parametrize("response,impact,severity", [
    ("Infrastructure impact: damaged\nInfrastructure severity: moderate", I.DAMAGED, Severity.MODERATE),
    ("Infrastructure impact: not_applicable\nInfrastructure severity: unknown",
     I.UNKNOWN_INAPPLICABLE, Severity.UNKNOWN),
    ("Infrastructure impact: flooded, damaged\nInfrastructure severity: severe", I.FLOODED, Severity.SEVERE),
    ("Infrastructure impact: Power outage and blocked\n", I.POWER_OUTAGE, Severity.UNKNOWN),
    ("I cannot tell.", I.UNKNOWN_INAPPLICABLE, Severity.UNKNOWN),
])
def test_parse_impact_response(response, impact, severity):
    pred = parse_impact_response(response)
    assert (pred.impact, pred.severity) == (impact, severity)


def test_classify_with_scripted_backend():
    backend = MockBackend({
        prompt_hash(render_impact_prompt(RADIOLOGY)):
            "Infrastructure impact: damaged\nInfrastructure severity: moderate",
        prompt_hash(render_status_classify_prompt(WIGRAM)): "Operational status: closed",
    })
    pred = classify_impact_severity(RADIOLOGY, backend)
    assert (pred.raw_model_impact, pred.impact, pred.severity) == ("damaged", I.DAMAGED, Severity.MODERATE)
    assert classify_operational_status(WIGRAM, backend) is S.CLOSED


def test_overall_status_scripted(scripted):
    tweets = [("t1", "X station closed due to flooding")]
    prompt = render_overall_status_prompt("X station", [t for _, t in tweets])
    backend = scripted({prompt_hash(prompt): "operational_status: closed"})
    pred = infer_overall_status("x", "X station", TimeInterval.H6_12, tweets, backend)
    assert pred.status is S.CLOSED and pred.evidence_tweet_ids == ("t1",)
    assert backend.calls == 1


def test_overall_status_empty_makes_no_call(scripted):
    backend = scripted({})
    pred = infer_overall_status("x", "X", TimeInterval.FULL_DAY, [], backend)
    assert pred.status is S.UNKNOWN and backend.calls == 0
