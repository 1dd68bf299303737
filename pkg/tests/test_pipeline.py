import csv
import json
import shutil

import pytest
import yaml

from cifwatch import pipeline
from cifwatch.cli import main
from cifwatch.config import config_hash, load_config, parse_config
from cifwatch.errors import ConfigError, DataError, StageError

from conftest import ROOT, smoke_config


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    work = tmp_path_factory.mktemp("smoke")
    cfg = smoke_config(work)
    report = pipeline.run_all(cfg)
    return cfg, report, work


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_counts(smoke_run):
    _, report, _ = smoke_run
    assert report.counts["signal"] == 20 and report.counts["noise"] == 980
    assert report.counts["cifs"] == 2


def test_map_curves_shape(smoke_run):
    _, _, work = smoke_run
    curves = rows(work / "reports" / "map_curves.csv")
    assert len(curves) == 3 * 5 * 10
    assert {(r["strategy"], r["interval"]) for r in curves} == {
        (s, i) for s in ("cif_only", "cif_plus_terms", "cif_plus_phrase")
        for i in ("H0_6", "H6_12", "H12_18", "H18_24", "FULL_DAY")}
    assert all(0.0 <= float(r["map"]) <= 1.0 for r in curves)


def test_breakdown_conserves(smoke_run):
    _, report, work = smoke_run
    for r in rows(work / "reports" / "retrieval_breakdown.csv"):
        assert int(r["relevant"]) + int(r["other_cif"]) + int(r["noise"]) == int(r["retrieved"]) == 50
    for block in report.retrieval.values():
        assert block["relevant_retrieved_full_day"] == sum(b["relevant"] for b in block["breakdown"])


def test_overall_status_table_shape(smoke_run):
    _, _, work = smoke_run
    table = rows(work / "reports" / "prf_overall_status.csv")
    assert list(table[0]) == ["aoi", "precision", "recall", "f1"] and len(table) == 1


def test_confusion_rows_match_support(smoke_run):
    _, report, _ = smoke_run
    for name, cm in report.confusion.items():
        per = {c.label: c.support for c in report.prf[name].per_class}
        for i, label in enumerate(cm.labels):
            assert cm.support(i) == per.get(label, 0)


def test_noise_lands_on_unknown_diagonal(smoke_run):
    _, report, _ = smoke_run
    cm = report.confusion["retrieved_impact"]
    i = [lab.value for lab in cm.labels].index("unknown_inapplicable")
    assert cm.counts[i][i] == max(max(r) for r in cm.counts)


def test_reference_annotation(smoke_run):
    _, report, _ = smoke_run
    ref = report.reference
    assert ref["non_reproducible"] is True
    assert ref["values"]["retrieval"]["cif_plus_phrase"]["map_at_50"]["FULL_DAY"] == 0.129


def test_mixed_config_hash_rejected(smoke_run, tmp_path):
    cfg, _, work = smoke_run
    shutil.copytree(work, tmp_path / "w", dirs_exist_ok=True)
    other = smoke_config(tmp_path / "w", corpus={"seed": 1})
    assert other.config_hash != cfg.config_hash
    with pytest.raises(StageError) as info:
        pipeline.run_stage(other, "index")
    assert isinstance(info.value.cause, DataError) and info.value.exit_code == 4
    assert "corpus" in str(info.value)


def test_missing_artifact_names_stage(tmp_path):
    with pytest.raises(StageError) as info:
        pipeline.run_stage(smoke_config(tmp_path), "retrieve")
    assert info.value.stage == "retrieve" and "not found" in str(info.value)


def test_paths_do_not_change_hash(tmp_path):
    assert smoke_config(tmp_path / "a").config_hash == smoke_config(tmp_path / "b").config_hash
    raw = {"aoi": {"name": "X"}, "paths": {"workdir": "a"}}
    assert config_hash(raw) == config_hash({**raw, "paths": {"workdir": "b"}})


@pytest.mark.parametrize("patch,message", [
    ({"corpus": {}}, "seed"),
    ({"aoi": {"name": "Atlantis"}}, "disaster_kind"),
    ({"metrics": {"step": 5}, "retrieval": {"k_grid": [5, 12]}}, "multiples"),
    ({"classification": {"k": 15}, "retrieval": {"k_grid": [5, 10]}}, "K grid"),
    ({"corpus": {"seed": 0, "signal_ratio": 1.5}}, "signal_ratio"),
    ({"backends": {"generation": {"kind": "http"}}}, "endpoint"),
])
def test_config_errors(patch, message, monkeypatch):
    monkeypatch.delenv("CIFWATCH_LLM_ENDPOINT", raising=False)
    raw = yaml.safe_load((ROOT / "configs" / "smoke.yaml").read_text())
    raw.update(patch)
    with pytest.raises(ConfigError, match=message):
        parse_config(raw, ROOT / "configs")


@pytest.mark.parametrize("name,cifs,slots", [("broward", 82, 410), ("christchurch", 58, 290)])
def test_paper_scale_configs_validate(name, cifs, slots, capsys):
    assert main(["validate", "--config", str(ROOT / "configs" / f"{name}.yaml")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["cifs"] == cifs and set(out["query_slots"].values()) == {slots}


# -- CLI ------------------------------------------------------------------------


def write_config(tmp_path, **overrides):
    raw = yaml.safe_load((ROOT / "configs" / "smoke.yaml").read_text())
    raw["paths"] = {"workdir": str(tmp_path / "work"),
                    "noise_pool": str(ROOT / "data" / "smoke" / "noise.txt")}
    fixtures = str(ROOT / "data" / "smoke" / "llm_fixtures.json")
    raw["backends"]["generation"]["fixtures"] = fixtures
    raw["backends"]["classification"]["fixtures"] = fixtures
    for k, v in overrides.items():
        raw[k] = v
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(raw))
    return path


def test_cli_stage_by_stage(tmp_path, capsys):
    cfg = write_config(tmp_path)
    for stage in ("fetch-cifs", "generate", "label-status", "build-timeline", "index",
                  "retrieve", "classify", "status", "evaluate"):
        assert main([stage, "--config", str(cfg)]) == 0, stage
    assert (tmp_path / "work" / "reports" / "report.json").exists()
    capsys.readouterr()
    index = tmp_path / "work" / "index.bin"
    assert main(["query", "--index", str(index), "--text", "North Perry Airport", "--k", "3",
                 "--dim", "64"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3 and lines[0].startswith("1\t")


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run-all", "--config", str(tmp_path / "missing.yaml")]) == 2
    (tmp_path / "bad.yaml").write_text("aoi: [unclosed")
    assert main(["validate", "--config", str(tmp_path / "bad.yaml")]) == 2
    cfg = write_config(tmp_path)
    assert main(["retrieve", "--config", str(cfg)]) == 4  # nothing built yet
    assert main(["fetch-cifs", "--config", str(cfg)]) == 0
    empty = tmp_path / "empty.json"
    empty.write_text("{}")
    assert main(["generate-corpus", "--config", str(cfg), "--backend", f"mock:{empty}"]) == 3
    err = capsys.readouterr().err
    assert "no scripted completion" in err and "generate" in err


def test_load_config_resolves_relative_paths():
    cfg = load_config(ROOT / "configs" / "smoke.yaml")
    assert cfg.paths["noise_pool"] == ROOT / "configs" / ".." / "data" / "smoke" / "noise.txt"
    assert cfg.generation.fixtures.exists()
