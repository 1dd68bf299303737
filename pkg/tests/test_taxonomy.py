import pytest
from hypothesis import given, strategies as st

from cifwatch.taxonomy import (
    IMPACT_EXTENSIONS,
    IMPACT_TABLE,
    ConsolidatedImpact,
    OperationalStatus,
    Severity,
    TimeInterval,
    consolidate_impact,
    normalize_label,
    parse_severity,
    parse_status_response,
)

# Raw labels printed under more than one row resolve to the first row.
CROSS_ROW = {"gas leak": ConsolidatedImpact.RUPTURED,
             "structurally compromised": ConsolidatedImpact.WEAKENED}


def test_table_has_every_consolidated_label():
    assert {row for row, _ in IMPACT_TABLE} == set(ConsolidatedImpact)
    assert len(IMPACT_TABLE) == 22


@pytest.mark.parametrize("row,raw", [(row, raw) for row, raws in IMPACT_TABLE for raw in raws])
def test_every_raw_label_maps(row, raw):
    expected = CROSS_ROW.get(normalize_label(raw), row)
    assert consolidate_impact(raw) is expected


def test_cross_row_duplicates_are_exactly_the_known_two():
    seen = {}
    dupes = set()
    for row, raws in IMPACT_TABLE:
        for raw in raws:
            key = normalize_label(raw)
            if key in seen and seen[key] is not row:
                dupes.add(key)
            seen.setdefault(key, row)
    assert dupes == set(CROSS_ROW)


@pytest.mark.parametrize("label", list(ConsolidatedImpact))
def test_consolidated_label_maps_to_itself(label):
    assert consolidate_impact(label.value) is label
    assert consolidate_impact(label.value.replace("_", " ")) is label


@pytest.mark.parametrize("raw,expected", IMPACT_EXTENSIONS)
def test_extensions(raw, expected):
    assert consolidate_impact(raw) is expected


@pytest.mark.parametrize("raw,expected", [
    ("submerged", ConsolidatedImpact.FLOODED),
    ("partially collapsed roof", ConsolidatedImpact.COLLAPSED),
    ("  Partially   Collapsed Roof. ", ConsolidatedImpact.COLLAPSED),
    ("POWER_OUTAGE", ConsolidatedImpact.POWER_OUTAGE),
    ("not_applicable", ConsolidatedImpact.UNKNOWN_INAPPLICABLE),
    ("xyzzy", ConsolidatedImpact.UNKNOWN_INAPPLICABLE),
    ("", ConsolidatedImpact.UNKNOWN_INAPPLICABLE),
])
def test_consolidate_examples(raw, expected):
    assert consolidate_impact(raw) is expected


@given(st.text(max_size=30))
def test_consolidate_is_total(raw):
    assert isinstance(consolidate_impact(raw), ConsolidatedImpact)


@pytest.mark.parametrize("raw,expected", [
    ("Severe", Severity.SEVERE), ("mild.", Severity.MILD), ("moderate", Severity.MODERATE),
    ("low", Severity.UNKNOWN), ("", Severity.UNKNOWN),
])
def test_parse_severity(raw, expected):
    assert parse_severity(raw) is expected


@pytest.mark.parametrize("text,expected", [
    ("Operational status: closed", OperationalStatus.CLOSED),
    ("The facility is partially open for emergencies.", OperationalStatus.PARTIALLY_OPEN),
    ("partially closed for repairs", OperationalStatus.PARTIALLY_CLOSED),
    ("no idea", OperationalStatus.UNKNOWN),
    ("operational_status: Open", OperationalStatus.OPEN),
    ("The tweet says closed. Operational status: partially open", OperationalStatus.PARTIALLY_OPEN),
])
def test_parse_status_response(text, expected):
    assert parse_status_response(text) is expected


def test_interval_codes_round_trip():
    for iv in (TimeInterval.H0_6, TimeInterval.H6_12, TimeInterval.H12_18, TimeInterval.H18_24):
        assert TimeInterval.from_code(iv.code) is iv
    assert TimeInterval.FULL_DAY.label == "0h-24h"
