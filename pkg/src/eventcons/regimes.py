"""Study-shaped evaluation across AI support regimes (Start/QC x WB/BB)."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import AnnotationSet, GroundTruth, ValidationError, natural_key
from .count_eval import CountConfig, CountMetrics
from .event_eval import EventScores, MatchConfig, TeamComparison, match_events
from .inference import (TIMINGS, TRANSPARENCIES, ContrastResult, FactorialCell,
                        bootstrap_ci, factorial_contrasts, holm_correct, log_transform,
                        paired_comparison, simple_effects)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegimeLabel:
    """A regime such as ``QC,WB`` (atomic) or ``Start+QC,WB`` (composite)."""

    timings: tuple[str, ...]
    transparencies: tuple[str, ...]

    def __post_init__(self):
        if not self.timings or not self.transparencies or any(
                x not in TIMINGS for x in self.timings) or any(
                x not in TRANSPARENCIES for x in self.transparencies):
            raise ValidationError(f"bad regime {self.timings}/{self.transparencies}")
        t = tuple(sorted(set(self.timings), key=TIMINGS.index))
        a = tuple(sorted(set(self.transparencies), key=TRANSPARENCIES.index))
        object.__setattr__(self, "timings", t)
        object.__setattr__(self, "transparencies", a)

    @classmethod
    def parse(cls, text: str) -> "RegimeLabel":
        try:
            timing, transparency = (s.strip() for s in text.split(","))
        except ValueError:
            raise ValidationError(f"regime must look like 'Start,WB', got {text!r}") from None
        # transparency composites are written "BB+WB"
        return cls(tuple(timing.split("+")), tuple(transparency.split("+")))

    @property
    def composite(self) -> bool:
        return len(self.timings) * len(self.transparencies) > 1

    @property
    def atoms(self) -> list["RegimeLabel"]:
        return [RegimeLabel((t,), (a,)) for t in self.timings for a in self.transparencies]

    def __str__(self) -> str:
        return "+".join(self.timings) + "," + "+".join(self.transparencies)


COMPOSITES = [RegimeLabel.parse(s) for s in ("Start+QC,WB", "Start+QC,BB", "Start,BB+WB", "QC,BB+WB")]


@dataclass(frozen=True)
class LayoutEntry:
    participant: str
    recording: str
    regime: RegimeLabel
    team_annotator: str
    solo_annotator: str | None = None
    phase: str | None = None


@dataclass
class StudyLayout:
    """Which recording each participant scored in each atomic regime, and under which ids.

    ``team_annotator`` holds the human-AI team annotations; QC entries also name
    the ``solo_annotator`` holding the manual pass scored before AI support.
    """

    entries: list[LayoutEntry]

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.regime.composite:
                raise ValidationError("layout entries must use atomic regimes")
            key = (e.participant, str(e.regime))
            if key in seen:
                raise ValidationError(f"duplicate layout entry {key}")
            seen.add(key)

    @classmethod
    def from_dict(cls, data: Mapping) -> "StudyLayout":
        rows = data.get("entries", data) if isinstance(data, Mapping) else data
        entries = []
        for i, r in enumerate(rows):
            try:
                entries.append(LayoutEntry(
                    str(r["participant"]), str(r["recording"]), RegimeLabel.parse(r["regime"]),
                    str(r["team_annotator"]), r.get("solo_annotator"),
                    None if r.get("phase") is None else str(r["phase"])))
            except KeyError as e:
                raise ValidationError(f"layout entry {i} lacks {e}") from None
        return cls(entries)

    @classmethod
    def load(cls, path: str | Path) -> "StudyLayout":
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"no such file: {path}")
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))

    @property
    def participants(self) -> list[str]:
        return sorted({e.participant for e in self.entries}, key=natural_key)


@dataclass
class RegimeRow:
    participant: str
    regime: RegimeLabel
    recordings: tuple[str, ...]
    team: EventScores
    ai: EventScores
    solo: EventScores | None
    counts: list[CountMetrics] = field(default_factory=list)
    solo_counts: list[CountMetrics] = field(default_factory=list)
    ai_by_recording: dict[str, EventScores] = field(default_factory=dict, repr=False)

    @property
    def composite(self) -> bool:
        return self.regime.composite

    @property
    def comparison(self) -> TeamComparison:
        return TeamComparison(self.team.f1, self.ai.f1, None if self.solo is None else self.solo.f1)

    def _count_value(self, metrics: list[CountMetrics], attr: str) -> float:
        vals = [getattr(m, attr) for m in metrics]
        return float(np.mean(vals)) if vals else math.nan

    def to_dict(self) -> dict:
        return {
            "participant": self.participant, "regime": str(self.regime),
            "composite": self.composite, "recordings": list(self.recordings),
            "team": self.team.to_dict(), "ai": self.ai.to_dict(),
            "solo": None if self.solo is None else self.solo.to_dict(),
            "comparison": self.comparison.to_dict(),
            "counts": [c.to_dict() for c in self.counts],
            "solo_counts": [c.to_dict() for c in self.solo_counts],
        }


@dataclass
class RegimeTable:
    rows: list[RegimeRow]

    def atomic(self) -> list[RegimeRow]:
        return [r for r in self.rows if not r.composite]

    def regimes(self) -> list[str]:
        return sorted({str(r.regime) for r in self.rows})

    def summary(self, resamples: int = 10_000, seed: int = 0) -> list[dict]:
        """Per-regime mean team F1, micro AI F1 and mean relative F1 with bootstrap CIs."""
        out = []
        for name in self.regimes():
            rows = [r for r in self.rows if str(r.regime) == name]
            team = np.array([r.team.f1 for r in rows])
            rel = np.array([r.comparison.relative_f1 for r in rows])
            ai_total = _unique_ai_scores(rows)
            entry = {"regime": name, "composite": rows[0].composite, "n": len(rows),
                     "f1_team_mean": float(team.mean()), "f1_ai": ai_total.f1,
                     "relative_f1_mean": float(np.nanmean(rel)) if np.isfinite(rel).any() else None}
            if len(rows) >= 2:
                entry["f1_team_ci"] = list(bootstrap_ci(team, resamples=resamples, seed=seed))
                finite = rel[np.isfinite(rel)]
                entry["relative_f1_ci"] = (list(bootstrap_ci(finite, resamples=resamples, seed=seed))
                                           if finite.size else None)
            out.append(entry)
        return out

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows]}


def _unique_ai_scores(rows: Sequence[RegimeRow]) -> EventScores:
    # the AI output for a recording is the same for every participant, count it once
    seen: dict[str, EventScores] = {}
    for r in rows:
        for rec, sc in r.ai_by_recording.items():
            seen[rec] = sc
    total = EventScores(0, 0, 0)
    for sc in seen.values():
        total = total + sc
    return total


def _times(aset: AnnotationSet, annotator: str, recording: str) -> list[float]:
    return [float(t) for t in aset.times(annotator).get(recording, [])]


def evaluate_regimes(layout: StudyLayout, annotations: AnnotationSet,
                     ai_events: Mapping[str, Sequence[float]], gt: GroundTruth,
                     match_cfg: MatchConfig = MatchConfig(),
                     count_cfg: CountConfig = CountConfig()) -> RegimeTable:
    """Event and count metrics per participant and regime.

    ``ai_events`` maps recording ids to AI reference times. Composite rows
    micro-aggregate their atomic rows and are descriptive only.
    """
    gt_times = gt.times()
    known = set(annotations.annotators)
    atomic: dict[tuple[str, str], RegimeRow] = {}
    for e in layout.entries:
        for who in (e.team_annotator, e.solo_annotator):
            if who is not None and who not in known:
                log.warning("annotator %s from the layout has no annotations", who)
        g = gt_times.get(e.recording, [])
        ai = [float(t) for t in ai_events.get(e.recording, [])]
        team_t = _times(annotations, e.team_annotator, e.recording)
        team = match_events(team_t, g, match_cfg).scores
        ai_sc = match_events(ai, g, match_cfg).scores
        solo = solo_counts = None
        if e.solo_annotator is not None:
            solo_t = _times(annotations, e.solo_annotator, e.recording)
            solo = match_events(solo_t, g, match_cfg).scores
            solo_counts = [CountMetrics(len(g), len(solo_t), len(ai), count_cfg)]
        row = RegimeRow(e.participant, e.regime, (e.recording,), team, ai_sc, solo,
                        [CountMetrics(len(g), len(team_t), len(ai), count_cfg)],
                        solo_counts or [], {e.recording: ai_sc})
        atomic[(e.participant, str(e.regime))] = row

    rows = list(atomic.values())
    for comp in COMPOSITES:
        for pid in layout.participants:
            parts = [atomic.get((pid, str(a))) for a in comp.atoms]
            if any(p is None for p in parts):
                continue
            solos = [p.solo for p in parts]
            row = RegimeRow(
                pid, comp, tuple(rec for p in parts for rec in p.recordings),
                _sum(p.team for p in parts), _sum(p.ai for p in parts),
                None if any(s is None for s in solos) else _sum(solos),
                [c for p in parts for c in p.counts], [c for p in parts for c in p.solo_counts],
                {k: v for p in parts for k, v in p.ai_by_recording.items()})
            rows.append(row)
    rows.sort(key=lambda r: (str(r.regime), natural_key(r.participant)))
    return RegimeTable(rows)


def _sum(scores: Iterable[EventScores]) -> EventScores:
    total = EventScores(0, 0, 0)
    for s in scores:
        total = total + s
    return total


def _cells(rows: Iterable[RegimeRow], value) -> list[FactorialCell]:
    cells = []
    for r in rows:
        if r.composite:
            raise ValidationError("composite regimes are descriptive only")
        v = value(r)
        if v is None or not math.isfinite(v):
            log.warning("participant %s has no finite value for %s; cell skipped",
                        r.participant, r.regime)
            continue
        cells.append(FactorialCell(r.participant, r.regime.timings[0],
                                   r.regime.transparencies[0], v))
    return cells


@dataclass
class RegimeInference:
    relative_f1: list[ContrastResult]
    relative_f1_simple: list[ContrastResult]
    y_rgt: list[ContrastResult]
    percentage_error: list[ContrastResult]
    qc_accuracy: list[ContrastResult]
    seed: int
    resamples: int

    def to_dict(self) -> dict:
        return {"seed": self.seed, "resamples": self.resamples,
                **{k: [c.to_dict() for c in getattr(self, k)]
                   for k in ("relative_f1", "relative_f1_simple", "y_rgt",
                             "percentage_error", "qc_accuracy")}}


def regime_inference(table: RegimeTable, resamples: int = 10_000, seed: int = 0) -> RegimeInference:
    """Factorial contrasts on atomic regimes.

    Relative F1 is analysed on the log scale and back-transformed to ratios;
    the count log ratio is already logarithmic; percentage error stays raw.
    """
    atomic = table.atomic()

    def rel(r):
        v = r.comparison.relative_f1
        return None if math.isnan(v) else float(log_transform(v))

    rel_cells = _cells(atomic, rel)
    y_cells = _cells(atomic, lambda r: r._count_value(r.counts, "y_rgt"))
    pe_cells = _cells(atomic, lambda r: r._count_value(r.counts, "pe"))

    qc = []
    for transparency in TRANSPARENCIES:
        rows = sorted((r for r in atomic if r.regime.timings == ("QC",)
                       and r.regime.transparencies == (transparency,) and r.solo_counts),
                      key=lambda r: natural_key(r.participant))
        if len(rows) < 2:
            continue
        team = [r._count_value(r.counts, "accuracy") for r in rows]
        solo = [r._count_value(r.solo_counts, "accuracy") for r in rows]
        qc.append(paired_comparison(f"QC,{transparency} team vs solo accuracy", team, solo,
                                    resamples, seed))
    for c, p in zip(qc, holm_correct([c.p_perm for c in qc])):
        c.p_holm = p

    return RegimeInference(
        relative_f1=factorial_contrasts(rel_cells, True, resamples, seed),
        relative_f1_simple=simple_effects(rel_cells, True, resamples, seed),
        y_rgt=factorial_contrasts(y_cells, True, resamples, seed),
        percentage_error=factorial_contrasts(pe_cells, False, resamples, seed),
        qc_accuracy=qc, seed=seed, resamples=resamples)


def added_deleted_events(before: AnnotationSet, after: AnnotationSet) -> dict[str, tuple[int, int]]:
    """Per annotator (added, deleted) between two passes; identity is exact (recording, onset)."""
    out = {}
    for a in sorted(set(before.annotators) | set(after.annotators), key=natural_key):
        b = {(r, t) for r, ts in before.times(a).items() for t in ts}
        c = {(r, t) for r, ts in after.times(a).items() for t in ts}
        out[a] = (len(c - b), len(b - c))
    return out


def time_demand_summary(durations_min: Mapping[str, Sequence[float]]) -> list[dict]:
    """Median and quartiles of externally recorded phase durations."""
    rows = []
    for phase in sorted(durations_min, key=natural_key):
        v = np.asarray(durations_min[phase], dtype=float)
        if v.size == 0:
            continue
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        rows.append({"phase": phase, "n": int(v.size), "median": float(med),
                     "q1": float(q1), "q3": float(q3)})
    return rows
