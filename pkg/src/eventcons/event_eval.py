"""Event-level evaluation of onset reference points against a ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import Annotation, GroundTruth, ValidationError

DEFAULT_THRESHOLD_MS = 9664


@dataclass(frozen=True)
class MatchConfig:
    distance_threshold_ms: int = DEFAULT_THRESHOLD_MS

    def __post_init__(self):
        if self.distance_threshold_ms <= 0:
            raise ValidationError("distance_threshold_ms must be positive")


def fbeta(precision: float, recall: float, beta: float) -> float:
    b2 = beta * beta
    den = b2 * precision + recall
    return 0.0 if den == 0 else (1 + b2) * precision * recall / den


@dataclass(frozen=True)
class EventScores:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self) -> float:
        return fbeta(self.precision, self.recall, 1.0)

    @property
    def f2(self) -> float:
        return fbeta(self.precision, self.recall, 2.0)

    def f(self, beta: float) -> float:
        return fbeta(self.precision, self.recall, beta)

    @property
    def zero_division(self) -> bool:
        """True when precision or recall had an empty denominator."""
        return self.tp + self.fp == 0 or self.tp + self.fn == 0

    def __add__(self, other: "EventScores") -> "EventScores":
        return EventScores(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "precision": self.precision,
                "recall": self.recall, "f1": self.f1, "f2": self.f2,
                "zero_division": self.zero_division}


@dataclass
class MatchResult:
    scores: EventScores
    matches: list[tuple[float, float]] = field(default_factory=list)
    unmatched_pred: list[float] = field(default_factory=list)
    unmatched_gt: list[float] = field(default_factory=list)


def match_events(pred: Sequence[float], gt: Sequence[float],
                 cfg: MatchConfig = MatchConfig()) -> MatchResult:
    """One-to-one matching within ``distance_threshold_ms`` (inclusive).

    Candidate pairs are accepted greedily by ascending distance; ties go to
    the earlier prediction, then the earlier ground-truth point.
    """
    p = np.sort(np.asarray(pred, dtype=float))
    g = np.sort(np.asarray(gt, dtype=float))
    thr = cfg.distance_threshold_ms
    pairs = []
    for i, t in enumerate(p):
        lo = np.searchsorted(g, t - thr, side="left")
        hi = np.searchsorted(g, t + thr, side="right")
        for j in range(lo, hi):
            pairs.append((abs(t - g[j]), t, g[j], i, j))
    pairs.sort()
    used_p: set[int] = set()
    used_g: set[int] = set()
    matches = []
    for _, t, u, i, j in pairs:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matches.append((float(t), float(u)))
    matches.sort()
    tp = len(matches)
    return MatchResult(
        EventScores(tp, len(p) - tp, len(g) - tp),
        matches,
        [float(t) for i, t in enumerate(p) if i not in used_p],
        [float(u) for j, u in enumerate(g) if j not in used_g],
    )


def match_recordings(pred: Mapping[str, Sequence[float]], gt: Mapping[str, Sequence[float]],
                     cfg: MatchConfig = MatchConfig(),
                     recordings: Iterable[str] | None = None) -> EventScores:
    """Micro-aggregated scores over recordings (missing entries count as empty)."""
    recs = list(recordings) if recordings is not None else sorted(set(pred) | set(gt))
    total = EventScores(0, 0, 0)
    for r in recs:
        total = total + match_events(pred.get(r, []), gt.get(r, []), cfg).scores
    return total


# --- reference points --------------------------------------------------------

def extract_reference_points(source: Iterable) -> dict[str, list[float]]:
    """Per-recording sorted reference times of an expert's events.

    Human and team annotations contribute their onset (for accepted AI
    events the stored onset is the AI argmax time). Predicted AI events
    contribute their argmax time.
    """
    out: dict[str, list[float]] = {}
    for ev in source:
        if isinstance(ev, Annotation):
            out.setdefault(ev.recording_id, []).append(float(ev.onset_ms))
        elif hasattr(ev, "argmax_time_ms"):
            out.setdefault(ev.recording_id, []).append(float(ev.argmax_time_ms))
        else:
            raise TypeError(f"cannot take a reference point from {type(ev).__name__}")
    return {r: sorted(v) for r, v in out.items()}


# --- consensus assignment ----------------------------------------------------

NOISE = -1


def assign_to_consensus(times: Sequence[float], centroids: Sequence[float],
                        threshold_ms: float) -> list[int]:
    """Index of the nearest centroid within ``threshold_ms`` per time, else ``NOISE``.

    Equidistant centroids resolve to the earlier one.
    """
    c = np.asarray(centroids, dtype=float)
    order = np.argsort(c, kind="stable")
    cs = c[order]
    out = []
    for t in times:
        if cs.size == 0:
            out.append(NOISE)
            continue
        k = int(np.searchsorted(cs, t))
        best = None
        for idx in (k - 1, k):
            if 0 <= idx < cs.size:
                d = abs(t - cs[idx])
                if best is None or d < best[0]:
                    best = (d, idx)
        if best[0] <= threshold_ms:
            out.append(int(order[best[1]]))
        else:
            out.append(NOISE)
    return out


def score_against_consensus(times: Mapping[str, Sequence[float]], consensus: GroundTruth,
                            threshold_ms: float) -> EventScores:
    """Scores by nearest-consensus-centroid assignment.

    A consensus event hit by at least one annotation is a TP; extra hits on
    the same event and annotations assigned to noise are FPs; consensus
    events without a hit are FNs.
    """
    gt = consensus.times()
    tp = fp = fn = 0
    for rec in sorted(set(times) | set(gt)):
        cents = gt.get(rec, [])
        labels = assign_to_consensus(times.get(rec, []), cents, threshold_ms)
        hit = {lab for lab in labels if lab != NOISE}
        tp += len(hit)
        fp += len(labels) - len(hit)
        fn += len(cents) - len(hit)
    return EventScores(tp, fp, fn)


# --- team comparisons ----------------------------------------------------------

def benefit_ratio(f1_team: float, f1_hu: float, f1_ai: float) -> float:
    """Team F1 gain over the solo human, normalized by the AI-human F1 gap."""
    if f1_ai == f1_hu:
        raise ValidationError("benefit ratio undefined when F1_AI == F1_HU")
    return (f1_team - f1_hu) / (f1_ai - f1_hu)


def relative_f1(f1_team: float, f1_ai: float) -> float:
    if f1_ai <= 0:
        raise ValidationError("relative F1 undefined when F1_AI <= 0")
    return f1_team / f1_ai


@dataclass(frozen=True)
class TeamComparison:
    f1_team: float
    f1_ai: float
    f1_hu: float | None = None

    @property
    def benefit_ratio(self) -> float:
        if self.f1_hu is None or self.f1_ai == self.f1_hu:
            return math.nan
        return benefit_ratio(self.f1_team, self.f1_hu, self.f1_ai)

    @property
    def benefit_applicable(self) -> bool:
        """The benefit ratio is interpretable only when the AI beats the solo human."""
        return self.f1_hu is not None and self.f1_ai > self.f1_hu

    @property
    def relative_f1(self) -> float:
        return relative_f1(self.f1_team, self.f1_ai) if self.f1_ai > 0 else math.nan

    @property
    def relative_defined(self) -> bool:
        return self.f1_ai > 0

    def to_dict(self) -> dict:
        b, r = self.benefit_ratio, self.relative_f1
        return {"f1_team": self.f1_team, "f1_ai": self.f1_ai, "f1_hu": self.f1_hu,
                "benefit_ratio": None if math.isnan(b) else b,
                "benefit_applicable": self.benefit_applicable,
                "relative_f1": None if math.isnan(r) else r,
                "relative_defined": self.relative_defined}
