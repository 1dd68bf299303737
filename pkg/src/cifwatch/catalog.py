"""Critical-facility catalogs: geocoder queries, live/fixture acquisition, JSON-lines persistence."""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

import requests

from .errors import ConfigError, ParseError, RetriableError, SchemaError
from .taxonomy import CifCategory, DisasterKind

log = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://nominatim.openstreetmap.org/search"
DEFAULT_LIMIT = 50
DEFAULT_DELAY_MS = 1100
USER_AGENT = "cifwatch/0.1 (critical-facility monitoring research)"

CATEGORY_PHRASES: dict[CifCategory, str] = {
    CifCategory.FIRE_STATION: "fire stations",
    CifCategory.MEDICAL: "hospitals",
    CifCategory.EDUCATIONAL: "schools",
    CifCategory.AIRPORT: "airports",
    CifCategory.BRIDGE_TUNNEL_RAIL: "railway stations",
}


def slugify(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.casefold()).strip("_")


@dataclass(frozen=True)
class AreaOfInterest:
    name: str
    disaster_kind: DisasterKind
    impact_terms: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name.strip():
            raise ValueError("area of interest needs a name")
        object.__setattr__(self, "disaster_kind", DisasterKind(self.disaster_kind))
        object.__setattr__(self, "impact_terms", tuple(self.impact_terms))
        if len(set(self.impact_terms)) != len(self.impact_terms):
            raise ValueError(f"duplicate impact terms for {self.name}")

    @property
    def slug(self) -> str:
        return slugify(self.name)


BROWARD = AreaOfInterest(
    "Broward County",
    DisasterKind.HURRICANE,
    (
        "flooded", "submerged", "damaged", "destroyed", "weakened", "cracked", "blocked",
        "torn", "power outage", "ruptured", "collapsed", "failed", "uprooted", "eroded",
        "burnt", "washed away", "slippery", "displaced", "disrupted",
    ),
)
CHRISTCHURCH = AreaOfInterest(
    "Christchurch",
    DisasterKind.EARTHQUAKE,
    (
        "flooded", "destroyed", "leak", "blocked", "cracked", "ground liquefaction",
        "power outage", "ruptured", "buried", "collapsed", "ground shake", "unsafe", "muddy",
    ),
)
KNOWN_AOIS: dict[str, AreaOfInterest] = {a.slug: a for a in (BROWARD, CHRISTCHURCH)}


def get_aoi(name: str) -> AreaOfInterest:
    try:
        return KNOWN_AOIS[slugify(name)]
    except KeyError:
        raise ConfigError(f"unknown area of interest {name!r}; known: {sorted(KNOWN_AOIS)}") from None


@dataclass(frozen=True)
class Cif:
    id: str
    name: str
    category: CifCategory
    aoi: str
    address: str = ""
    lat: float | None = None
    lon: float | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("CIF id must be non-empty")
        if not self.name.strip():
            raise ValueError(f"CIF {self.id} has an empty name")
        object.__setattr__(self, "category", CifCategory(self.category))
        if self.lat is not None and not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"CIF {self.id}: latitude {self.lat} out of range")
        if self.lon is not None and not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"CIF {self.id}: longitude {self.lon} out of range")

    @property
    def name_and_address(self) -> str:
        return f"{self.name} & {self.address}" if self.address else self.name

    def to_json(self) -> dict:
        row = asdict(self)
        row["category"] = self.category.value
        return {k: row[k] for k in ("id", "name", "address", "lat", "lon", "category", "aoi")}


def build_geocode_query(aoi: AreaOfInterest, category: CifCategory) -> str:
    return f"{aoi.name} {CATEGORY_PHRASES[CifCategory(category)]}"


def dedup_key(cif: Cif) -> tuple:
    lat = None if cif.lat is None else round(cif.lat, 4)
    lon = None if cif.lon is None else round(cif.lon, 4)
    return (cif.name.casefold(), lat, lon)


def deduplicate(cifs: Iterable[Cif]) -> list[Cif]:
    seen: set[tuple] = set()
    out = []
    for cif in cifs:
        key = dedup_key(cif)
        if key not in seen:
            seen.add(key)
            out.append(cif)
    return out


# -- persistence -------------------------------------------------------------

_REQUIRED = ("id", "name", "category", "aoi")


def cif_from_json(row: dict) -> Cif:
    missing = [k for k in _REQUIRED if k not in row]
    if missing:
        raise ValueError(f"missing field(s) {', '.join(missing)}")
    return Cif(
        id=str(row["id"]),
        name=row["name"],
        category=row["category"],
        aoi=row["aoi"],
        address=row.get("address") or "",
        lat=None if row.get("lat") is None else float(row["lat"]),
        lon=None if row.get("lon") is None else float(row["lon"]),
    )


def save_catalog(cifs: Sequence[Cif], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for cif in cifs:
            fh.write(json.dumps(cif.to_json(), ensure_ascii=False) + "\n")


def load_catalog(path: str | Path) -> list[Cif]:
    path = Path(path)
    cifs = []
    ids: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                cif = cif_from_json(json.loads(line))
            except (ValueError, TypeError) as exc:
                raise SchemaError(str(exc), line=lineno, path=str(path)) from exc
            if cif.id in ids:
                raise SchemaError(f"duplicate CIF id {cif.id!r}", line=lineno, path=str(path))
            ids.add(cif.id)
            cifs.append(cif)
    return cifs


def bundled_fixture(aoi: AreaOfInterest | str) -> Path:
    slug = aoi.slug if isinstance(aoi, AreaOfInterest) else slugify(aoi)
    res = resources.files("cifwatch") / "data" / f"{slug}.jsonl"
    if not res.is_file():
        raise ConfigError(f"no bundled CIF fixture for {slug!r}")
    return Path(str(res))


# -- acquisition -------------------------------------------------------------


@dataclass
class LiveSource:
    """Nominatim-style search endpoint. Raw responses are cached per (aoi, category)."""

    endpoint: str = DEFAULT_ENDPOINT
    cache_dir: Path = Path("cache")
    delay_ms: int = DEFAULT_DELAY_MS
    limit: int = DEFAULT_LIMIT
    timeout: float = 30.0
    session: requests.Session = field(default_factory=requests.Session)
    sleep: Callable[[float], None] = time.sleep


@dataclass
class FixtureSource:
    path: Path | None = None  # None: the catalog bundled for the AOI


def _osm_name(result: dict) -> str:
    name = (result.get("name") or "").strip()
    if not name:
        name = (result.get("display_name") or "").split(",")[0].strip()
    return name


def parse_search_results(payload: str, aoi: AreaOfInterest, category: CifCategory) -> list[Cif]:
    try:
        results = json.loads(payload)
    except json.JSONDecodeError:
        raise ParseError("search response is not JSON", payload[:200]) from None
    if not isinstance(results, list):
        raise ParseError("search response is not a JSON array", payload[:200])
    cifs = []
    for result in results:
        try:
            name = _osm_name(result)
            if not name:
                continue
            osm_id = result.get("osm_id", result.get("place_id"))
            cifs.append(Cif(
                id=f"osm:{result.get('osm_type', 'x')}:{osm_id}",
                name=name,
                category=category,
                aoi=aoi.name,
                address=result.get("display_name", ""),
                lat=float(result["lat"]),
                lon=float(result["lon"]),
            ))
        except (KeyError, TypeError, ValueError, AttributeError):
            raise ParseError("malformed search result", json.dumps(result)[:200]) from None
    return cifs


def _fetch_live(
    aoi: AreaOfInterest, category: CifCategory, src: LiveSource, polite_wait: bool
) -> tuple[str, bool]:
    """Return (payload, whether an HTTP request was issued)."""
    cache = Path(src.cache_dir) / aoi.slug / f"{category.value}.json"
    if cache.exists():
        return cache.read_text(encoding="utf-8"), False
    query = build_geocode_query(aoi, category)
    if polite_wait:
        src.sleep(src.delay_ms / 1000.0)
    params = {"q": query, "format": "jsonv2", "limit": src.limit}
    try:
        resp = src.session.get(
            src.endpoint, params=params, headers={"User-Agent": USER_AGENT}, timeout=src.timeout
        )
    except requests.RequestException as exc:
        raise RetriableError(f"geocoder request failed: {exc}", query=query) from exc
    if resp.status_code != 200:
        raise RetriableError(f"geocoder returned HTTP {resp.status_code}", query=query,
                             status=resp.status_code)
    cache.parent.mkdir(parents=True, exist_ok=True)
    cache.write_text(resp.text, encoding="utf-8")
    return resp.text, True


def fetch_cifs(
    aoi: AreaOfInterest,
    categories: Sequence[CifCategory],
    source: LiveSource | FixtureSource,
) -> list[Cif]:
    """Collect the CIFs of ``aoi`` in ``categories``, deduplicated.

    Live fetching is sequential with ``delay_ms`` between uncached requests.
    """
    wanted = [CifCategory(c) for c in categories]
    if not wanted:
        return []
    if isinstance(source, FixtureSource):
        path = source.path if source.path is not None else bundled_fixture(aoi)
        cifs = [c for c in load_catalog(path) if c.category in wanted]
        return deduplicate(cifs)

    cifs: list[Cif] = []
    requested = False
    for category in wanted:
        payload, issued = _fetch_live(aoi, category, source, polite_wait=requested)
        requested = requested or issued
        found = parse_search_results(payload, aoi, category)
        log.info("%s: %d results", build_geocode_query(aoi, category), len(found))
        cifs.extend(found)
    return deduplicate(cifs)
