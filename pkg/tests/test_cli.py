import csv
import hashlib
import json
import subprocess
import sys

import pytest

from eventcons.cli import main, toy_config_path
from study_tables import CPS_GT_AI_ROW, CPS_GT_HU_ROWS, CPS_GT_TEAM_ROWS
from eventcons.event_eval import EventScores

BASE_ARTIFACTS = {"clustering.json", "consensus.json", "agreement.json", "pairwise_kappa.csv",
                  "event_scores.json", "event_scores.csv"}


def read_dir(folder):
    return {p.name: p.read_bytes() for p in sorted(folder.rglob("*")) if p.is_file()}


def test_toy_pipeline_writes_manifest_and_six_artifacts(tmp_path):
    assert main(["pipeline", "--toy", "--out", str(tmp_path / "o")]) == 0
    files = set(read_dir(tmp_path / "o"))
    assert files == BASE_ARTIFACTS | {"manifest.json"}
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["seed"] == 0
    assert {a["name"] for a in manifest["artifacts"]} == BASE_ARTIFACTS
    for a in manifest["artifacts"]:
        assert hashlib.sha256((tmp_path / "o" / a["name"]).read_bytes()).hexdigest() == a["sha256"]
    for name in BASE_ARTIFACTS:
        text = (tmp_path / "o" / name).read_text()
        assert manifest["config_hash"] in text.splitlines()[0] or \
            json.loads(text)["config_hash"] == manifest["config_hash"]


def test_toy_fixture_shape():
    rows = list(csv.DictReader(open(toy_config_path().parent / "annotations.csv")))
    assert {r["annotator_id"] for r in rows} == {"A1", "A2", "A3"}
    assert {r["recording_id"] for r in rows} == {"R1", "R2"}


def test_pipeline_is_byte_identical_on_rerun(tmp_path, study_fixture):
    for run in ("a", "b"):
        assert main(["pipeline", "--config", str(study_fixture), "--out", str(tmp_path / run)]) == 0
    a, b = read_dir(tmp_path / "a"), read_dir(tmp_path / "b")
    assert a == b
    assert {"regimes.json", "inference.json", "predicted_events.json", "threshold_curve.csv",
            "count_metrics.csv"} <= set(a)


def test_seed_changes_hash(tmp_path):
    main(["pipeline", "--toy", "--out", str(tmp_path / "a")])
    main(["pipeline", "--toy", "--seed", "5", "--out", str(tmp_path / "b")])
    ha = json.loads((tmp_path / "a" / "manifest.json").read_text())["config_hash"]
    hb = json.loads((tmp_path / "b" / "manifest.json").read_text())["config_hash"]
    assert ha != hb


@pytest.mark.parametrize("command", ["cluster", "consensus", "agreement", "eval-events"])
def test_single_stage_commands(tmp_path, command):
    assert main([command, "--toy", "--out", str(tmp_path)]) == 0
    assert any(tmp_path.iterdir())


def test_eval_counts(tmp_path, study_fixture):
    assert main(["eval-counts", "--config", str(study_fixture), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "count_metrics.csv").exists()
    assert main(["eval-counts", "--toy", "--out", str(tmp_path / "x")]) == 2


def test_validation_errors_exit_2(tmp_path):
    assert main(["pipeline", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"annotations": "a.csv", "surprise": 1}))
    assert main(["pipeline", "--config", str(bad)]) == 2
    assert main(["pipeline"]) == 2
    assert main(["no-such-command"]) == 2


def test_runtime_errors_exit_3(tmp_path, monkeypatch):
    import eventcons.cli as cli

    def boom(*_a, **_k):
        raise RuntimeError("disk on fire")
    monkeypatch.setattr(cli, "cmd_cluster", boom)
    monkeypatch.setattr(cli, "build_parser", _parser_with(cli, boom))
    assert main(["cluster", "--toy", "--out", str(tmp_path)]) == 3


def _parser_with(cli, fn):
    original = cli.build_parser

    def build():
        p = original()
        for action in p._subparsers._group_actions:
            action.choices["cluster"].set_defaults(func=fn)
        return p
    return build


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "eventcons", "pipeline", "--toy", "--out",
                        str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0 and "config hash" in r.stdout


# --- report ----------------------------------------------------------------------------

def test_report_empty_dir_is_error(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["report", str(tmp_path / "empty")]) == 2


def test_report_rejects_mixed_hashes(tmp_path):
    main(["pipeline", "--toy", "--out", str(tmp_path / "a")])
    main(["pipeline", "--toy", "--seed", "9", "--out", str(tmp_path / "b")])
    (tmp_path / "a" / "consensus.json").write_bytes((tmp_path / "b" / "consensus.json").read_bytes())
    assert main(["report", str(tmp_path / "a")]) == 2


def test_report_tables_and_svgs(tmp_path, study_fixture):
    out = tmp_path / "run"
    assert main(["pipeline", "--config", str(study_fixture), "--out", str(out)]) == 0
    assert main(["report", str(out), "--svg"]) == 0
    rep = out / "report"
    regimes = json.loads((out / "regimes.json").read_text())
    n_regimes = len({r["regime"] for r in regimes["rows"]})
    assert len(list(rep.glob("*.svg"))) == n_regimes == 8
    lines = (rep / "fig_threshold_curve.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash:")
    thresholds = [float(r["threshold"]) for r in csv.DictReader(lines[1:])]
    assert thresholds == sorted(thresholds) and len(set(thresholds)) == len(thresholds)
    # the report can itself be re-read by the report command
    assert main(["report", str(rep), "--out", str(tmp_path / "again")]) == 0


# --- stats -------------------------------------------------------------------------

def f1s(rows):
    return [EventScores(tp, fp, fn).f1 for _, _, _, _, _, tp, fp, fn in rows]


def test_stats_reproduces_paired_means(tmp_path):
    hu, team = f1s(CPS_GT_HU_ROWS), f1s(CPS_GT_TEAM_ROWS)
    ai = f1s([CPS_GT_AI_ROW])[0]
    spec = {"resamples": 500, "analyses": [
        {"kind": "paired", "name": "HU+AI vs HU", "a": team, "b": hu},
        {"kind": "one_sample", "name": "HU+AI vs AI", "a": team, "mu0": ai},
        {"kind": "one_sample", "name": "HU vs AI", "a": hu, "mu0": ai},
    ]}
    path = tmp_path / "stats_in.json"
    path.write_text(json.dumps(spec))
    assert main(["stats", "--input", str(path), "--out", str(tmp_path / "o")]) == 0
    report = json.loads((tmp_path / "o" / "stats.json").read_text())
    got = [round(a["result"]["estimate"], 2) for a in report["analyses"]]
    assert got == [0.13, -0.15, -0.28]
    assert all(a["result"]["p_values"]["perm"] == 2 / 256 for a in report["analyses"])


def test_stats_factorial_and_bad_input(tmp_path):
    cells = [{"participant": f"P{i}", "timing": t, "transparency": w, "value": 0.5 + 0.1 * i + d}
             for i in range(4) for t, w, d in (("Start", "WB", .1), ("Start", "BB", 0),
                                                ("QC", "WB", .2), ("QC", "BB", 0))]
    path = tmp_path / "f.json"
    path.write_text(json.dumps({"resamples": 100, "analyses": [
        {"kind": "factorial", "cells": cells, "log_scale": True, "simple_effects": True}]}))
    assert main(["stats", "--input", str(path), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "stats.json").read_text())["analyses"][0]
    assert len(rep["contrasts"]) == 3 and len(rep["simple_effects"]) == 4
    path.write_text(json.dumps({"analyses": [{"kind": "mystery"}]}))
    assert main(["stats", "--input", str(path)]) == 2
