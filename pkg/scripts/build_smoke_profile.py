"""Build the offline smoke profile: a noise pool and recorded LLM fixtures.

A small keyword simulator stands in for the language model. Every prompt it
answers is recorded by hash, so ``configs/smoke.yaml`` can replay the whole
pipeline through the mock backend with no network access.

    python3 scripts/build_smoke_profile.py            # rebuild data/smoke/*
    python3 scripts/build_smoke_profile.py --goldens  # also refresh tests/golden/smoke
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import re
import shutil
import tempfile
import threading
from pathlib import Path

import numpy as np

from cifwatch.config import load_config
from cifwatch.llm import GenerationRequest, prompt_hash
from cifwatch.pipeline import run_all

ROOT = Path(__file__).resolve().parents[1]
SMOKE_CONFIG = ROOT / "configs" / "smoke.yaml"
NOISE_PATH = ROOT / "data" / "smoke" / "noise.txt"
FIXTURES_PATH = ROOT / "data" / "smoke" / "llm_fixtures.json"
GOLDEN_DIR = ROOT / "tests" / "golden" / "smoke"

# -- noise pool ------------------------------------------------------------------

_NOISE_OPENERS = [
    "Stocking up on water and batteries before the storm",
    "Praying for everyone in the path of the hurricane",
    "The wind is howling outside and the rain will not stop",
    "Power flickered twice tonight, hoping it stays on",
    "Gas lines are wrapped around the block in Fort Lauderdale",
    "Just boarded up the windows with my neighbors",
    "Schools announced they will stay shut tomorrow",
    "Traffic on I-95 is crawling north as people evacuate",
    "My dog is terrified of the thunder right now",
    "Grocery shelves are completely empty of bread and milk",
    "Watching the radar and the eye looks huge",
    "Trees are bending sideways on our street",
    "Local news says the storm surge could be historic",
    "Volunteers are handing out sandbags at the park",
    "Cannot believe how fast the water came up in the canal",
    "Shelters are opening across the county this afternoon",
    "The beach looks wild with waves crashing over the seawall",
    "Our street flooding again, cars stuck at the intersection",
    "Thank you to every lineman working through the night",
    "Still no cell signal in parts of Hollywood",
]
_NOISE_TAILS = [
    "Stay safe everyone.",
    "Check on your neighbors.",
    "We will get through this.",
    "Keep your phones charged.",
    "Do not drive through standing water.",
    "Updates to follow.",
    "This is the worst one I remember.",
    "Follow the county alerts for details.",
    "Hoping for the best tonight.",
    "Please share with friends in the area.",
]
_NOISE_TAGS = ["#HurricaneIan", "#FLwx", "#BrowardStrong", "#StaySafe", "#Hurricane", ""]


def make_noise_pool(n: int, seed: int) -> list[str]:
    """``n`` distinct chatter lines, deterministic for a seed."""
    rng = np.random.default_rng(seed)
    lines: list[str] = []
    seen: set[str] = set()
    while len(lines) < n:
        opener = _NOISE_OPENERS[rng.integers(len(_NOISE_OPENERS))]
        tail = _NOISE_TAILS[rng.integers(len(_NOISE_TAILS))]
        tag = _NOISE_TAGS[rng.integers(len(_NOISE_TAGS))]
        hour = int(rng.integers(1, 13))
        line = f"{opener} ({hour} {'am' if rng.integers(2) else 'pm'}). {tail} {tag}".strip()
        if line not in seen:
            seen.add(line)
            lines.append(line)
    return lines


# -- keyword simulator -------------------------------------------------------------

_GEN_TEMPLATES = [
    ("{name}'s emergency entrance is flooded after a burst of rain from the hurricane. "
     "Patients are being moved to upper floors.", "Flooded", "Moderate"),
    ("Strong winds tore through {name}, causing roof damage and shattered windows. "
     "The building is closed until further notice.", "Roof damage", "Severe"),
    ("Storm surge has submerged the lower levels of {name}. Access roads are under water "
     "and the site is closed.", "Submerged", "Severe"),
    ("A tornado spun off the hurricane and collapsed part of the east wing at {name}. "
     "Crews are on scene and the wing is partially closed.", "Partially collapsed", "Severe"),
    ("Power outage at {name} after the storm knocked out lines nearby. Backup generators "
     "are running and it remains open.", "Power outage", "Moderate"),
    ("Fallen trees have blocked access to {name}. Only the north entrance is usable, so it "
     "is partially open.", "Blocked access", "Moderate"),
    ("Minor water damage reported in the lobby of {name} after heavy rain. Operations "
     "continue and the site is open.", "Water damage", "Mild"),
    ("A generator failure at {name} has left several areas without ventilation. Part of the "
     "facility is partially closed.", "Generator failure", "Severe"),
    ("Debris from the hurricane cracked walls near the main entrance of {name}. Engineers "
     "are assessing the structure today.", "Cracked walls", "Moderate"),
    ("Flash flooding around {where} has left the parking lot under two feet of water. "
     "Visitors are asked to stay away.", "Flash flooding", "Moderate"),
]

_IMPACT_KEYWORDS = [
    ("collapsed", "collapsed"), ("submerged", "flooded"), ("flood", "flooded"),
    ("under water", "flooded"), ("power outage", "power outage"), ("knocked out", "power outage"),
    ("blocked", "blocked"), ("cracked", "cracked"), ("generator failure", "failed"),
    ("roof damage", "damaged"), ("damage", "damaged"), ("tore", "torn"), ("destroyed", "destroyed"),
    ("uprooted", "uprooted"), ("washed", "washed away"),
]
_STATUS_RE = re.compile(r"partially closed|partially open|remains open|is open|closed|shut|open",
                        re.IGNORECASE)
_STATUS_MAP = {"remains open": "open", "is open": "open", "shut": "closed"}


def _status_of(text: str) -> str:
    hits = _STATUS_RE.findall(text)
    if not hits:
        return "unknown"
    word = hits[-1].lower()
    return _STATUS_MAP.get(word, word)


def _impact_of(text: str) -> tuple[str, str]:
    low = text.lower()
    found = [(low.find(k), v) for k, v in _IMPACT_KEYWORDS if k in low]
    if not found:
        return "not_applicable", "unknown"
    impact = min(found)[1]
    if re.search(r"severe|collapsed|submerged|destroyed", low):
        severity = "severe"
    elif re.search(r"minor|slight", low):
        severity = "mild"
    else:
        severity = "moderate"
    return impact, severity


def _tweet_after(prompt: str, marker: str) -> str:
    start = prompt.index("Tweet: ") + len("Tweet: ")
    return prompt[start:prompt.index(marker, start)].strip()


class KeywordSimulator:
    """Deterministic stand-in for the LLM, keyed on the prompt kind."""

    max_concurrent = 4

    def complete(self, req: GenerationRequest) -> str:
        p = req.prompt
        if p.startswith("Generate 15 diverse tweets"):
            return self._generate(p)
        if p.rstrip().endswith("operational_status:"):
            return self._overall(p)
        if p.rstrip().endswith("Infrastructure severity:"):
            impact, severity = _impact_of(_tweet_after(p, "\n\nInfrastructure impact:"))
            return f"Infrastructure impact: {impact}\nInfrastructure severity: {severity}"
        if p.rstrip().endswith("Operational status:"):
            return f"Operational status: {_status_of(_tweet_after(p, chr(10) + 'Operational status:'))}"
        raise ValueError(f"simulator cannot answer prompt starting {p[:60]!r}")

    def _generate(self, prompt: str) -> str:
        m = re.search(r"(?:hurricane on|Christchruch's) (.+?)\. The disaster", prompt)
        target = m.group(1)
        name = target.split(" & ")[0]
        where = target.split(" & ")[1] if " & " in target and target.split(" & ")[1] else name
        order = np.random.default_rng(int(hashlib.sha256(name.encode()).hexdigest()[:8], 16))
        idx = order.permutation(len(_GEN_TEMPLATES))
        blocks = []
        for j in idx:
            text, impact, severity = _GEN_TEMPLATES[j]
            blocks.append(f"{text.format(name=name, where=where)} (Tags: {impact}, {severity})")
        blocks.insert(3, f"Thinking of everyone who relies on {name} tonight.")
        return "\n\n".join(f"{i}. {b}" for i, b in enumerate(blocks, start=1))

    def _overall(self, prompt: str) -> str:
        name = re.search(r"facility, named (.+?)\. Since", prompt).group(1)
        key = name.split()[0].lower()
        statuses = [_status_of(line) for line in prompt.splitlines()
                    if line.startswith("Tweet: ") and key in line.lower()]
        known = [s for s in statuses if s != "unknown"]
        return f"operational_status: {known[-1] if known else 'unknown'}"


class RecordingBackend:
    def __init__(self, inner):
        self.inner = inner
        self.max_concurrent = inner.max_concurrent
        self.records: dict[str, str] = {}
        self._lock = threading.Lock()

    def complete(self, req: GenerationRequest) -> str:
        out = self.inner.complete(req)
        with self._lock:
            self.records[prompt_hash(req.prompt)] = out
        return out


def _workdir_config(workdir: Path):
    cfg = load_config(SMOKE_CONFIG)
    paths = {k: (v if k == "noise_pool" else workdir / v.relative_to(cfg.path("catalog").parent))
             for k, v in cfg.paths.items()}
    return dataclasses.replace(cfg, paths=paths)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--goldens", action="store_true", help="refresh tests/golden/smoke")
    ap.add_argument("--noise-lines", type=int, default=1500)
    args = ap.parse_args()

    NOISE_PATH.parent.mkdir(parents=True, exist_ok=True)
    NOISE_PATH.write_text("\n".join(make_noise_pool(args.noise_lines, seed=7)) + "\n", encoding="utf-8")

    recorder = RecordingBackend(KeywordSimulator())
    with tempfile.TemporaryDirectory() as tmp:
        cfg = _workdir_config(Path(tmp) / "record")
        run_all(cfg, backends={"generation": recorder, "classification": recorder})
    FIXTURES_PATH.write_text(json.dumps(recorder.records, sort_keys=True, indent=1) + "\n",
                             encoding="utf-8")
    print(f"{len(recorder.records)} fixtures -> {FIXTURES_PATH.relative_to(ROOT)}")

    # Replay through the mock backend to confirm the fixtures cover every prompt.
    with tempfile.TemporaryDirectory() as tmp:
        cfg = _workdir_config(Path(tmp) / "replay")
        run_all(cfg)
        if args.goldens:
            if GOLDEN_DIR.exists():
                shutil.rmtree(GOLDEN_DIR)
            shutil.copytree(Path(tmp) / "replay", GOLDEN_DIR,
                            ignore=shutil.ignore_patterns("cache"))
            print(f"goldens -> {GOLDEN_DIR.relative_to(ROOT)}")


if __name__ == "__main__":
    main()
