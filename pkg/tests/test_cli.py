import json
import xml.etree.ElementTree as ET

import pytest

from udset import tubes
from udset.cli import CACHE, EXIT_CONFIG, EXIT_FAIL, EXIT_MISSING, EXIT_OK, main
from udset.config import RunConfig


def _small_config(tmp_path, **maximizer):
    raw = RunConfig().to_dict()
    raw["maximizer"].update({"pool_size": 12, "N": 6, **maximizer})
    p = tmp_path / "small.json"
    p.write_text(json.dumps(raw))
    return str(p)


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["build", "--out", str(out)]) == EXIT_OK
    return out


def test_build_writes_cache_config_and_stats(run_dir):
    for name in (CACHE, "config.json", "stats.json"):
        assert (run_dir / name).exists()
    stats = json.loads((run_dir / "stats.json").read_text())
    assert stats["K"] == 4 and stats["triples"] == sum(lv["count"] for lv in stats["levels"])


def test_rebuild_gives_identical_stats(run_dir, tmp_path):
    assert main(["build", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "stats.json").read_bytes() == (run_dir / "stats.json").read_bytes()
    assert (tmp_path / CACHE).read_bytes() == (run_dir / CACHE).read_bytes()


def test_invalid_rho_is_a_config_error(tmp_path):
    raw = RunConfig().to_dict()
    raw["tubes"]["rho"] = "3/2"
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(raw))
    assert main(["build", "--config", str(p), "--out", str(tmp_path / "r")]) == EXIT_CONFIG
    assert not (tmp_path / "r" / CACHE).exists()


def test_unknown_config_key_is_a_config_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"tubes": {"width": 1}}))
    assert main(["build", "--config", str(p), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_verify_without_cache_reports_missing(tmp_path):
    assert main(["verify", "--out", str(tmp_path), "--suites", "tube_invariants"]) == EXIT_MISSING


def test_verify_with_no_suites_is_ok(run_dir):
    assert main(["verify", "--out", str(run_dir), "--suites", ""]) == EXIT_OK
    assert json.loads((run_dir / "verify.json").read_text())["suites"] == []


def test_verify_unknown_suite_is_a_config_error(run_dir):
    assert main(["verify", "--out", str(run_dir), "--suites", "nope"]) == EXIT_CONFIG


def test_verify_passes_then_catches_a_corrupted_width(run_dir, tmp_path, capsys):
    assert main(["verify", "--out", str(run_dir), "--suites", "tube_invariants"]) == EXIT_OK
    summary = (run_dir / "summary.csv").read_text().splitlines()
    assert summary[1].startswith("tube_invariants,True")

    for name in ("config.json", CACHE):
        (tmp_path / name).write_bytes((run_dir / name).read_bytes())
    con = tubes.load(tmp_path / CACHE)
    from dataclasses import replace
    victim = max((t for t in con.triples.values() if t.level == con.K), key=lambda t: t.id)
    con.triples[victim.id] = replace(victim, w=2 * victim.w)
    tubes.save(con, tmp_path / CACHE)
    capsys.readouterr()
    assert main(["verify", "--out", str(tmp_path), "--suites", "tube_invariants"]) == EXIT_FAIL
    assert "FAILED suites: tube_invariants" in capsys.readouterr().out


def test_export_formats(run_dir):
    assert main(["export", "--out", str(run_dir), "--format", "svg"]) == EXIT_OK
    root = ET.parse(run_dir / "tubes.svg").getroot()
    assert root.tag.endswith("svg")
    assert main(["export", "--out", str(run_dir), "--format", "csv"]) == EXIT_OK
    rows = (run_dir / "tubes.csv").read_text().splitlines()
    stats = json.loads((run_dir / "stats.json").read_text())
    assert len(rows) - 1 == stats["triples"]
    assert main(["export", "--out", str(run_dir), "--format", "json"]) == EXIT_OK
    assert len(json.loads((run_dir / "tubes.json").read_text())) == stats["triples"]


def test_export_unknown_format(run_dir):
    assert main(["export", "--out", str(run_dir), "--format", "png"]) == EXIT_CONFIG


def test_export_respects_depth(tmp_path):
    assert main(["build", "--out", str(tmp_path), "--depth", "1"]) == EXIT_OK
    assert main(["export", "--out", str(tmp_path), "--format", "json"]) == EXIT_OK
    rows = json.loads((tmp_path / "tubes.json").read_text())
    assert rows and max(r["level"] for r in rows) <= 1


def test_maximize_unknown_function(run_dir):
    assert main(["maximize", "--out", str(run_dir), "--function", "nope"]) == EXIT_CONFIG


def test_maximize_l1_and_report(run_dir, tmp_path):
    cfg = _small_config(tmp_path)
    assert main(["maximize", "--out", str(run_dir), "--config", cfg, "--function", "l1"]) == EXIT_OK
    rep = json.loads((run_dir / "maximize" / "l1" / "report.json").read_text())
    assert rep["status"] == "ok"
    assert rep["final_weight"] >= rep["initial_weight"] - 1e-9
    lines = (run_dir / "maximize" / "l1" / "trace.jsonl").read_text().splitlines()
    assert len(lines) == rep["steps"] + 1
    assert main(["report", "--out", str(run_dir)]) == EXIT_OK
    assert "l1" in json.loads((run_dir / "report.json").read_text())["maximize"]


def test_maximize_linear_has_flat_modulus(run_dir, tmp_path):
    cfg = _small_config(tmp_path)
    assert main(["maximize", "--out", str(run_dir), "--config", cfg, "--function", "linear"]) == EXIT_OK
    rep = json.loads((run_dir / "maximize" / "linear" / "report.json").read_text())
    assert max(rep["modulus"]["M"]) <= 1e-6


def test_report_on_empty_dir_is_missing(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == EXIT_MISSING
