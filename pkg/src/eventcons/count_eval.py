"""Count-based measures on per-recording event totals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class CountConfig:
    ape_epsilon: float = 1e-8
    ratio_delta: float = 1e-6


def deviation(c_x: int, c_gt: int) -> int:
    return abs(c_x - c_gt)


def count_accuracy(c_x: int, c_gt: int, cfg: CountConfig = CountConfig()) -> float:
    """1 / (1 + APE) with APE = |c_x - c_gt| / max(c_gt, eps)."""
    ape = deviation(c_x, c_gt) / max(c_gt, cfg.ape_epsilon)
    return 1.0 / (1.0 + ape)


def improvement_ratio(d_ai: float, d_team: float,
                      cfg: CountConfig = CountConfig()) -> tuple[float, float]:
    """(R, log R) where R = (d_ai + delta) / (d_team + delta); log R > 0 means the team is closer."""
    y = math.log(d_ai + cfg.ratio_delta) - math.log(d_team + cfg.ratio_delta)
    return math.exp(y), y


def percentage_error(c_team: int, c_gt: int, cfg: CountConfig = CountConfig()) -> float:
    """Signed relative count error; positive means over-counting."""
    return (c_team - c_gt) / max(c_gt, cfg.ape_epsilon)


def qc_delta(a_team: float | Sequence[float], a_solo: float | Sequence[float]):
    """Team minus solo count accuracy, elementwise for sequences."""
    if np.isscalar(a_team) and np.isscalar(a_solo):
        return float(a_team) - float(a_solo)
    team = np.asarray(a_team, dtype=float)
    solo = np.asarray(a_solo, dtype=float)
    if team.shape != solo.shape:
        raise ValueError("team and solo accuracies must pair up")
    return (team - solo).tolist()


def dispersion_summary(counts: Sequence[float], c_gt: float) -> tuple[float, float]:
    """(coefficient of variation with sample sd, mean absolute error to c_gt)."""
    x = np.asarray(counts, dtype=float)
    if x.size == 0:
        return math.nan, math.nan
    mae = float(np.mean(np.abs(x - c_gt)))
    if x.size < 2:
        return math.nan, mae
    mean = x.mean()
    sd = x.std(ddof=1)
    if sd == 0:
        return 0.0, mae
    cv = float(sd / mean) if mean != 0 else math.nan
    return cv, mae


@dataclass(frozen=True)
class CountMetrics:
    c_gt: int
    c_x: int
    c_ai: int | None = None
    cfg: CountConfig = CountConfig()

    @property
    def deviation(self) -> int:
        return deviation(self.c_x, self.c_gt)

    @property
    def accuracy(self) -> float:
        return count_accuracy(self.c_x, self.c_gt, self.cfg)

    @property
    def pe(self) -> float:
        return percentage_error(self.c_x, self.c_gt, self.cfg)

    @property
    def r_gt(self) -> float:
        if self.c_ai is None:
            return math.nan
        return improvement_ratio(deviation(self.c_ai, self.c_gt), self.deviation, self.cfg)[0]

    @property
    def y_rgt(self) -> float:
        if self.c_ai is None:
            return math.nan
        return improvement_ratio(deviation(self.c_ai, self.c_gt), self.deviation, self.cfg)[1]

    def to_dict(self) -> dict:
        out = {"c_gt": self.c_gt, "c_x": self.c_x, "c_ai": self.c_ai,
               "deviation": self.deviation, "accuracy": self.accuracy, "pe": self.pe}
        if self.c_ai is not None:
            out.update(r_gt=self.r_gt, y_rgt=self.y_rgt)
        return out
