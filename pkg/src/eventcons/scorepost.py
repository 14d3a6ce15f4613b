"""Turn AI confidence-score series into discrete predicted events."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import GroundTruth, ScoreSeries, ValidationError
from .event_eval import EventScores, MatchConfig, fbeta, match_events

log = logging.getLogger(__name__)

AUTO = "auto-fbeta"


@dataclass(frozen=True)
class PostprocessConfig:
    smoothing_window_ms: int = 3000
    merge_gap_ms: int = 10_000
    max_interval_ms: int = 60_000
    train_buffer_ms: int = 15_000
    threshold: float | str = AUTO
    beta: float = 2.0

    def __post_init__(self):
        if isinstance(self.threshold, str):
            if self.threshold != AUTO:
                raise ValidationError(f"threshold must be a number or {AUTO!r}")
        elif not 0.0 <= self.threshold <= 1.0:
            raise ValidationError("threshold must lie in [0, 1]")
        for name in ("smoothing_window_ms", "merge_gap_ms", "max_interval_ms", "train_buffer_ms"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")
        if self.beta <= 0:
            raise ValidationError("beta must be positive")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class PredictedEvent:
    """Half-open interval ``[start_ms, end_ms)`` with its score peak."""

    recording_id: str
    start_ms: int
    end_ms: int
    argmax_time_ms: int
    peak_score: float

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms

    def to_dict(self) -> dict:
        return {"recording_id": self.recording_id, "start_ms": self.start_ms,
                "end_ms": self.end_ms, "argmax_time_ms": self.argmax_time_ms,
                "peak_score": self.peak_score}


def window_samples(window_ms: int, sample_interval_ms: int) -> int:
    """Samples in the averaging window, rounded down to an odd count so it centres."""
    n = int(window_ms // sample_interval_ms)
    if n > 1 and n % 2 == 0:
        n -= 1
    return max(n, 1)


def smooth(series: ScoreSeries, window_ms: int) -> ScoreSeries:
    """Centered moving average; near the edges only in-range samples are averaged."""
    n = window_samples(window_ms, series.sample_interval_ms)
    x = series.scores
    if n <= 1 or x.size == 0:
        return series
    half = n // 2
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(x.size)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, x.size)
    out = (csum[hi] - csum[lo]) / (hi - lo)
    return ScoreSeries(series.recording_id, series.sample_interval_ms, np.clip(out, 0.0, 1.0))


def threshold_runs(scores: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """Maximal index runs ``[i, j)`` with score >= threshold."""
    above = np.concatenate(([False], np.asarray(scores) >= threshold, [False]))
    edges = np.flatnonzero(np.diff(above.astype(np.int8)))
    return [(int(a), int(b)) for a, b in zip(edges[::2], edges[1::2])]


def merge_intervals(intervals: Iterable[tuple[int, int]], merge_gap_ms: int) -> list[tuple[int, int]]:
    """Fuse intervals whose edge-to-edge gap is below ``merge_gap_ms``."""
    out: list[list[int]] = []
    for s, e in sorted(intervals):
        if out and s - out[-1][1] < merge_gap_ms:
            out[-1][1] = max(out[-1][1], e)
        else:
            out.append([s, e])
    return [(s, e) for s, e in out]


def _events_from_intervals(series: ScoreSeries, intervals: Sequence[tuple[int, int]],
                           max_interval_ms: int) -> list[PredictedEvent]:
    dt = series.sample_interval_ms
    events = []
    for s, e in intervals:
        if e - s > max_interval_ms:
            continue
        i0, i1 = s // dt, e // dt
        k = i0 + int(np.argmax(series.scores[i0:i1]))
        events.append(PredictedEvent(series.recording_id, s, e, k * dt,
                                     float(series.scores[k])))
    return events


def extract_events(series: ScoreSeries, cfg: PostprocessConfig,
                   threshold: float | None = None) -> list[PredictedEvent]:
    """Threshold, merge, discard long intervals and locate each peak.

    ``series`` is used as given; call ``smooth`` first for the full pipeline.
    """
    if threshold is None:
        if cfg.threshold == AUTO:
            raise ValidationError("threshold is 'auto-fbeta'; run fbeta_threshold_sweep first")
        threshold = float(cfg.threshold)
    dt = series.sample_interval_ms
    runs = [(a * dt, b * dt) for a, b in threshold_runs(series.scores, threshold)]
    merged = merge_intervals(runs, cfg.merge_gap_ms)
    return _events_from_intervals(series, merged, cfg.max_interval_ms)


def above_threshold_duration_ms(series: ScoreSeries, threshold: float) -> int:
    return int(np.count_nonzero(series.scores >= threshold)) * series.sample_interval_ms


def predict(series_list: Iterable[ScoreSeries], cfg: PostprocessConfig,
            threshold: float | None = None) -> list[PredictedEvent]:
    """Smooth every series and extract its events."""
    out: list[PredictedEvent] = []
    for s in series_list:
        out.extend(extract_events(smooth(s, cfg.smoothing_window_ms), cfg, threshold))
    return out


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    scores: EventScores
    event_count: int


@dataclass
class SweepResult:
    best_threshold: float
    beta: float
    curve: list[SweepPoint]
    empty_ground_truth: bool = False
    grid: list[float] = field(default_factory=list, repr=False)

    def rows(self) -> list[dict]:
        return [{"threshold": p.threshold, "f1": p.scores.f1, "f2": p.scores.f2,
                 "event_count": p.event_count} for p in self.curve]

    def to_dict(self) -> dict:
        return {"best_threshold": self.best_threshold, "beta": self.beta,
                "empty_ground_truth": self.empty_ground_truth, "curve": self.rows()}


def default_grid(step: float = 0.01) -> list[float]:
    n = int(round(1.0 / step))
    return [round(i * step, 10) for i in range(n + 1)]


def fbeta_threshold_sweep(series: Sequence[ScoreSeries], train_gt: GroundTruth,
                          cfg: PostprocessConfig,
                          grid: Sequence[float] | None = None) -> SweepResult:
    """Pick the threshold maximizing micro-averaged F-beta on training recordings.

    Predicted argmax times are matched to ground-truth events within
    ``train_buffer_ms``. Ties resolve to the lowest threshold.
    """
    grid = sorted(default_grid() if grid is None else grid)
    if not grid:
        raise ValidationError("empty threshold grid")
    smoothed = [smooth(s, cfg.smoothing_window_ms) for s in series]
    gt_times = train_gt.times()
    match_cfg = MatchConfig(cfg.train_buffer_ms)
    empty = len(train_gt.events) == 0
    if empty:
        log.warning("training ground truth is empty; every F-beta is 0")
    curve = []
    best, best_score = grid[0], -1.0
    for thr in grid:
        total = EventScores(0, 0, 0)
        n_events = 0
        for s in smoothed:
            ev = extract_events(s, cfg, thr)
            n_events += len(ev)
            total = total + match_events([e.argmax_time_ms for e in ev],
                                         gt_times.get(s.recording_id, []), match_cfg).scores
        curve.append(SweepPoint(float(thr), total, n_events))
        score = fbeta(total.precision, total.recall, cfg.beta)
        if score > best_score:
            best, best_score = float(thr), score
    return SweepResult(best, cfg.beta, curve, empty, list(grid))
