from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np
import pytest

from eventcons.core import Annotation, AnnotationSet

ACCEPTANCE_LINES: list[str] = []
STUDY_DATA_ENV = "EVENTCONS_STUDY_DATA"


def make_set(spec: dict[str, dict[str, list[int]]]) -> AnnotationSet:
    """{annotator: {recording: [onsets]}} -> AnnotationSet."""
    return AnnotationSet.from_annotations(
        Annotation(a, r, t) for a, recs in spec.items() for r, ts in recs.items() for t in ts)


REGIMES = ("Start,WB", "Start,BB", "QC,WB", "QC,BB")


def write_study_fixture(folder: Path, participants: int = 3, seed: int = 1) -> Path:
    """Write a small study-shaped input set and return its config path.

    One recording per atomic regime, shared by all participants; QC regimes
    also carry a solo pass. AI events come from score series, with the
    threshold picked on a separate training recording.
    """
    rng = np.random.default_rng(seed)
    folder.mkdir(parents=True, exist_ok=True)
    dt, length = 1000, 900
    truth = {f"REC{j}": sorted(rng.choice(np.arange(20, length - 20, 45), 12, replace=False))
             for j in range(len(REGIMES))}
    truth["TRAIN"] = list(range(30, length - 30, 60))

    def score_file(rec, hits):
        x = rng.uniform(0, 0.1, length)
        for t in hits:
            x[t - 1:t + 2] = rng.uniform(0.6, 0.95)
        name = f"scores_{rec}.json"
        (folder / name).write_text(json.dumps(
            {"recording_id": rec, "sample_interval_ms": dt, "scores": x.round(4).tolist()}))
        return {"path": name, "sample_interval_ms": dt}

    scores = [score_file(rec, truth[rec][:9 + j % 3]) for j, rec in enumerate(truth) if rec != "TRAIN"]
    train = [score_file("TRAIN", truth["TRAIN"])]

    rows, layout = [], []
    for p in range(participants):
        for j, regime in enumerate(REGIMES):
            rec = f"REC{j}"
            found = [t for t in truth[rec] if rng.random() < 0.55 + 0.08 * j]
            extra = list(rng.integers(0, length, 2))
            for t in found + extra:
                rows.append((f"T{p}", rec, int(t) * dt + int(rng.integers(-2000, 2000))))
            entry = {"participant": f"P{p}", "recording": rec, "regime": regime,
                     "team_annotator": f"T{p}"}
            if regime.startswith("QC"):
                for t in truth[rec][::2]:
                    rows.append((f"S{p}", rec, int(t) * dt + int(rng.integers(-2000, 2000))))
                entry["solo_annotator"] = f"S{p}"
            layout.append(entry)

    def write_csv(name, data):
        with open(folder / name, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["annotator_id", "recording_id", "onset_ms"])
            w.writerows(sorted(set(data)))

    write_csv("annotations.csv", rows)
    write_csv("cps.csv", [("CPS", r, int(t) * dt) for r, ts in truth.items() if r != "TRAIN"
                          for t in ts])
    write_csv("train_cps.csv", [("CPS", "TRAIN", int(t) * dt) for t in truth["TRAIN"]])
    (folder / "layout.json").write_text(json.dumps({"entries": layout}, indent=1))
    config = {
        "annotations": "annotations.csv", "ground_truth": "cps.csv", "layout": "layout.json",
        "scores": scores, "train_scores": train, "train_ground_truth": "train_cps.csv",
        "cluster": {"method": "dbscan", "epsilon_ms": 9664, "min_cluster_annotators": 2},
        "postprocess": {"threshold": "auto-fbeta"}, "seed": 7, "resamples": 300,
    }
    path = folder / "config.json"
    path.write_text(json.dumps(config, indent=1))
    return path


@pytest.fixture
def study_fixture(tmp_path) -> Path:
    return write_study_fixture(tmp_path / "inputs")


def require_study_data() -> Path:
    root = os.environ.get(STUDY_DATA_ENV)
    if not root or not Path(root).is_dir():
        pytest.skip(f"study data not supplied (set {STUDY_DATA_ENV})")
    return Path(root)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
