from __future__ import annotations

import threading
from pathlib import Path

import pytest

from cifwatch.catalog import Cif
from cifwatch.corpus import Tweet
from cifwatch.llm import GenerationRequest, prompt_hash
from cifwatch.taxonomy import CifCategory, ConsolidatedImpact, OperationalStatus, Severity

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = Path(__file__).resolve().parent / "golden"

_criteria: list[tuple[str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(text): acceptance criterion covered by a test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marks = getattr(report, "criterion", None)
    if marks:
        _criteria.append(("PASS" if report.passed else "FAIL", marks))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        report.criterion = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for status, text in _criteria:
        terminalreporter.write_line(f"[{status}] {text}")


def make_cif(i: int = 1, name: str | None = None, aoi: str = "Broward County") -> Cif:
    return Cif(id=f"c{i:03d}", name=name or f"Facility {i}", category=CifCategory.MEDICAL, aoi=aoi)


def make_signal(cif_id: str, n: int, impact=ConsolidatedImpact.DAMAGED,
                status=OperationalStatus.UNKNOWN) -> list[Tweet]:
    return [
        Tweet(id=f"{cif_id}-t{j:02d}", text=f"{cif_id} tweet number {j}", is_signal=True,
              cif_id=cif_id, gt_raw_impact=impact.value, gt_impact=impact,
              gt_severity=Severity.MODERATE, gt_status=status)
        for j in range(1, n + 1)
    ]


class ScriptedBackend:
    """Answers by prompt hash or by a callable; counts calls."""

    def __init__(self, answer, max_concurrent: int = 4):
        self.answer = answer
        self.max_concurrent = max_concurrent
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, req: GenerationRequest) -> str:
        with self._lock:
            self.calls += 1
        if callable(self.answer):
            return self.answer(req.prompt)
        return self.answer[prompt_hash(req.prompt)]


@pytest.fixture
def scripted():
    return ScriptedBackend


def smoke_config(workdir: Path, **overrides):
    """The shipped smoke profile with artifacts redirected to ``workdir``."""
    import yaml

    from cifwatch.config import parse_config

    raw = yaml.safe_load((ROOT / "configs" / "smoke.yaml").read_text())
    raw["paths"]["workdir"] = str(workdir)
    for section, values in overrides.items():
        raw.setdefault(section, {}).update(values)
    return parse_config(raw, ROOT / "configs")
