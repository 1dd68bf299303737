"""Closed label sets shared across the pipeline and the raw-impact consolidation table."""

from __future__ import annotations

import re
from enum import Enum


class CifCategory(str, Enum):
    FIRE_STATION = "fire_station"
    MEDICAL = "medical"
    EDUCATIONAL = "educational"
    AIRPORT = "airport"
    BRIDGE_TUNNEL_RAIL = "bridge_tunnel_rail"


class DisasterKind(str, Enum):
    HURRICANE = "hurricane"
    EARTHQUAKE = "earthquake"


class ConsolidatedImpact(str, Enum):
    DAMAGED = "damaged"
    FLOODED = "flooded"
    DESTROYED = "destroyed"
    WEAKENED = "weakened"
    CRACKED = "cracked"
    BLOCKED = "blocked"
    TORN = "torn"
    POWER_OUTAGE = "power_outage"
    RUPTURED = "ruptured"
    COLLAPSED = "collapsed"
    FAILED = "failed"
    UPROOTED = "uprooted"
    ERODED = "eroded"
    WASHED_AWAY = "washed_away"
    SLIPPERY = "slippery"
    DISPLACED = "displaced"
    BLOWN = "blown"
    BURNT = "burnt"
    UNSAFE = "unsafe"
    LEAKAGE = "leakage"
    SINKED = "sinked"
    UNKNOWN_INAPPLICABLE = "unknown_inapplicable"


class Severity(str, Enum):
    SEVERE = "severe"
    MODERATE = "moderate"
    MILD = "mild"
    UNKNOWN = "unknown"


class OperationalStatus(str, Enum):
    OPEN = "open"
    CLOSED = "closed"
    PARTIALLY_OPEN = "partially_open"
    PARTIALLY_CLOSED = "partially_closed"
    UNKNOWN = "unknown"


class TimeInterval(str, Enum):
    H0_6 = "H0_6"
    H6_12 = "H6_12"
    H12_18 = "H12_18"
    H18_24 = "H18_24"
    FULL_DAY = "FULL_DAY"

    @property
    def code(self) -> int:
        return _INTERVAL_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "TimeInterval":
        try:
            return SIX_HOUR_INTERVALS[code]
        except IndexError:
            raise ValueError(f"invalid interval code {code}") from None

    @property
    def label(self) -> str:
        return _INTERVAL_LABELS[self]


SIX_HOUR_INTERVALS: tuple[TimeInterval, ...] = (
    TimeInterval.H0_6,
    TimeInterval.H6_12,
    TimeInterval.H12_18,
    TimeInterval.H18_24,
)
ALL_INTERVALS: tuple[TimeInterval, ...] = SIX_HOUR_INTERVALS + (TimeInterval.FULL_DAY,)

_INTERVAL_CODES = {iv: i for i, iv in enumerate(SIX_HOUR_INTERVALS)}
_INTERVAL_LABELS = {
    TimeInterval.H0_6: "0h-6h",
    TimeInterval.H6_12: "6h-12h",
    TimeInterval.H12_18: "12h-18h",
    TimeInterval.H18_24: "18h-24h",
    TimeInterval.FULL_DAY: "0h-24h",
}


# Consolidated label -> raw model labels, in table order. Duplicates are kept
# as printed; lookup resolves a raw label to the first row that lists it.
IMPACT_TABLE: tuple[tuple[ConsolidatedImpact, tuple[str, ...]], ...] = (
    (ConsolidatedImpact.DAMAGED, (
        "aftershock damage", "damage", "damaged", "broken windows", "damaged infrastructure",
        "damaged roads", "damaged roofs", "damaged walls", "electrical damage",
        "coastal ecosystem damage", "foundation damage", "landscaping damage", "exterior damage",
        "hvac damage", "infrastructure damage", "roof damage", "plumbing damage",
        "sewage system damage", "structural damage", "wall damage", "water damage",
        "equipment damage", "damaged foundation", "interior damage", "IT damage",
        "liquefaction damage", "partially damaged", "pavement damage", "plumbing damage",
        "IT infrastructure damage", "equipment damage", "paint damage",
    )),
    (ConsolidatedImpact.FLOODED, (
        "flooded basement", "flooded businesses", "flooded parking lot", "flooding",
        "severe flooding", "flash flooding", "submerged", "inundated",
    )),
    (ConsolidatedImpact.DESTROYED, ("destroyed", "destroyed buildings", "destroyed homes", "rubble")),
    (ConsolidatedImpact.WEAKENED, ("weakened", "structurally compromised")),
    (ConsolidatedImpact.CRACKED, (
        "cracked", "shattered", "shattered windows", "debris", "cracked wall", "cracked walls",
    )),
    (ConsolidatedImpact.BLOCKED, (
        "blocked access", "blocked entrance", "impassable", "obstructed", "clogged sewage",
        "inaccessible", "partially blocked", "landslide", "jammed doors",
    )),
    (ConsolidatedImpact.TORN, ("partially torn off", "roof torn off")),
    (ConsolidatedImpact.POWER_OUTAGE, (
        "power line down", "power loss", "power outage", "power down", "communication down",
        "communication loss", "down", "knocked out", "disrupted", "downed trees", "offline",
    )),
    (ConsolidatedImpact.RUPTURED, ("blown open", "gas leak", "roof leak")),
    (ConsolidatedImpact.COLLAPSED, (
        "partially collapsed", "collapsed", "crushed", "collapse risk", "collapsed wall",
        "collapsed chimney", "partially collapsed roof",
    )),
    (ConsolidatedImpact.FAILED, ("generator failure", "ventilation failure", "out of order")),
    (ConsolidatedImpact.UPROOTED, ("uprooted", "uprooted power lines")),
    (ConsolidatedImpact.ERODED, ("eroded", "erosion")),
    (ConsolidatedImpact.WASHED_AWAY, ("washed away", "muddy")),
    (ConsolidatedImpact.SLIPPERY, ("slippery", "slick")),
    (ConsolidatedImpact.DISPLACED, ("displaced",)),
    (ConsolidatedImpact.BLOWN, ("blown", "blown off")),
    (ConsolidatedImpact.BURNT, ("burnt", "burning", "fire")),
    (ConsolidatedImpact.UNSAFE, (
        "unsafe", "unstable", "structurally compromised", "uninhabitable", "contaminated",
    )),
    (ConsolidatedImpact.LEAKAGE, ("leak", "gas leak", "gasleak")),
    (ConsolidatedImpact.SINKED, (
        "ground liquefaction", "liquefaction", "buried", "sinked", "sinking", "caved-in",
        "ground rupture", "liquefied",
    )),
    (ConsolidatedImpact.UNKNOWN_INAPPLICABLE, (
        "not applicable", "not humanitarian", "no impact", "unknown",
    )),
)

# Not in the printed table. "ground shake" is offered to the classifier as a
# descriptor, so it needs a target.
IMPACT_EXTENSIONS: tuple[tuple[str, ConsolidatedImpact], ...] = (
    ("ground shake", ConsolidatedImpact.DAMAGED),
    ("unknown/inapplicable", ConsolidatedImpact.UNKNOWN_INAPPLICABLE),
)

_WS = re.compile(r"\s+")


def normalize_label(raw: str) -> str:
    """Case-fold, map underscores to spaces, collapse whitespace, drop edge punctuation."""
    text = raw.replace("_", " ").casefold()
    text = _WS.sub(" ", text).strip()
    return text.strip(" .,;:!\"'*`")


def _build_lookup() -> dict[str, ConsolidatedImpact]:
    lookup: dict[str, ConsolidatedImpact] = {}
    for label, raws in IMPACT_TABLE:
        for raw in raws:
            lookup.setdefault(normalize_label(raw), label)
    for raw, label in IMPACT_EXTENSIONS:
        lookup.setdefault(normalize_label(raw), label)
    # Every consolidated label also names itself ("blocked", "power outage", ...).
    for label in ConsolidatedImpact:
        lookup.setdefault(normalize_label(label.value), label)
    return lookup


IMPACT_LOOKUP: dict[str, ConsolidatedImpact] = _build_lookup()


def consolidate_impact(raw: str) -> ConsolidatedImpact:
    """Map an open-vocabulary impact tag onto the consolidated taxonomy.

    Unmapped strings fall back to ``unknown_inapplicable``.
    """
    return IMPACT_LOOKUP.get(normalize_label(raw), ConsolidatedImpact.UNKNOWN_INAPPLICABLE)


def parse_severity(raw: str) -> Severity:
    try:
        return Severity(normalize_label(raw))
    except ValueError:
        return Severity.UNKNOWN


# Phrases in the order they must be tried: two-word statuses first.
_STATUS_PHRASES: tuple[tuple[str, OperationalStatus], ...] = (
    ("partially closed", OperationalStatus.PARTIALLY_CLOSED),
    ("partially open", OperationalStatus.PARTIALLY_OPEN),
    ("closed", OperationalStatus.CLOSED),
    ("open", OperationalStatus.OPEN),
    ("unknown", OperationalStatus.UNKNOWN),
)
_STATUS_RE = re.compile(
    r"\b(" + "|".join(p.replace(" ", r"[\s_-]+") for p, _ in _STATUS_PHRASES) + r")\b",
    re.IGNORECASE,
)
_STATUS_PREFIX_RE = re.compile(r"operational[\s_]+status\s*:", re.IGNORECASE)


def parse_status_response(response: str) -> OperationalStatus:
    """Pick the first status keyword in a model response.

    Text after an ``Operational status:`` (or ``operational_status:``) prefix is
    searched first; without a prefix the whole response is scanned. At any
    position the longer phrase wins, so "partially closed" never reads as
    "closed".
    """
    prefix = _STATUS_PREFIX_RE.search(response)
    body = response[prefix.end():] if prefix else response
    match = _STATUS_RE.search(body)
    if match is None:
        return OperationalStatus.UNKNOWN
    phrase = _WS.sub(" ", re.sub(r"[_-]", " ", match.group(1))).casefold()
    return dict(_STATUS_PHRASES)[phrase]
