"""Chance-corrected agreement over cluster-membership indicators.

Units are the non-noise clusters, raters are annotators, and a rating is 1
when the annotator has a member in the cluster.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .clustering import Clustering
from .consensus import indicator_matrix
from .core import ValidationError

STATISTICS = ("krippendorff_alpha", "fleiss_kappa", "mean_pairwise_cohen_kappa")
MAX_RATERS_WITHOUT_OVERRIDE = 20


@dataclass(frozen=True)
class RatingMatrix:
    units: tuple[int, ...]
    raters: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=int).reshape(len(self.units), len(self.raters))
        if not np.isin(v, (0, 1)).all():
            raise ValidationError("ratings must be binary")
        object.__setattr__(self, "values", v)

    def drop_raters(self, removed: Sequence[str]) -> "RatingMatrix":
        keep = [i for i, r in enumerate(self.raters) if r not in set(removed)]
        return RatingMatrix(self.units, tuple(self.raters[i] for i in keep), self.values[:, keep])


def build_rating_matrix(c: Clustering) -> RatingMatrix:
    return RatingMatrix(tuple(cl.cluster_id for cl in c.clusters), c.annotators,
                        indicator_matrix(c).astype(int))


@dataclass
class AgreementStats:
    krippendorff_alpha: float
    fleiss_kappa: float
    mean_pairwise_cohen_kappa: float
    pairwise_kappa: np.ndarray
    raters: tuple[str, ...]
    undefined: dict[str, str] = field(default_factory=dict)

    def get(self, name: str) -> float:
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {
            "krippendorff_alpha": _num(self.krippendorff_alpha),
            "fleiss_kappa": _num(self.fleiss_kappa),
            "mean_pairwise_cohen_kappa": _num(self.mean_pairwise_cohen_kappa),
            "raters": list(self.raters),
            "pairwise_kappa": [[_num(x) for x in row] for row in self.pairwise_kappa],
            "undefined": self.undefined,
        }


def _num(x: float):
    return None if math.isnan(x) else float(x)


def krippendorff_alpha_nominal(values: np.ndarray) -> float:
    """Nominal alpha from the coincidence matrix; units x raters, no missing data."""
    v = np.asarray(values)
    n_units, m = v.shape
    if m < 2 or n_units == 0:
        return math.nan
    cats = np.unique(v)
    counts = np.stack([(v == c).sum(axis=1) for c in cats], axis=1)  # units x cats
    coinc = (counts.T @ counts - np.diag(counts.sum(axis=0))) / (m - 1)
    n_c = coinc.sum(axis=1)
    n = n_c.sum()
    observed = coinc.sum() - np.trace(coinc)
    expected = n_c.sum() ** 2 - (n_c ** 2).sum()
    if expected == 0:
        return math.nan
    return float(1.0 - (n - 1) * observed / expected)


def fleiss_kappa(values: np.ndarray) -> float:
    v = np.asarray(values)
    n_units, m = v.shape
    if m < 2 or n_units == 0:
        return math.nan
    cats = np.unique(v)
    counts = np.stack([(v == c).sum(axis=1) for c in cats], axis=1).astype(float)
    p_unit = ((counts ** 2).sum(axis=1) - m) / (m * (m - 1))
    p_bar = p_unit.mean()
    p_cat = counts.sum(axis=0) / (n_units * m)
    p_e = (p_cat ** 2).sum()
    if p_e == 1.0:
        return math.nan
    return float((p_bar - p_e) / (1.0 - p_e))


def cohen_kappa(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x)
    y = np.asarray(y)
    n = len(x)
    if n == 0:
        return math.nan
    cats = np.union1d(x, y)
    p_o = float(np.mean(x == y))
    p_e = float(sum(np.mean(x == c) * np.mean(y == c) for c in cats))
    if p_e == 1.0:
        return math.nan
    return (p_o - p_e) / (1.0 - p_e)


def pairwise_kappa_matrix(values: np.ndarray) -> np.ndarray:
    m = values.shape[1]
    out = np.eye(m)
    for i, j in itertools.combinations(range(m), 2):
        out[i, j] = out[j, i] = cohen_kappa(values[:, i], values[:, j])
    return out


def agreement_stats(m: RatingMatrix) -> AgreementStats:
    """Krippendorff's alpha, Fleiss' kappa and mean pairwise Cohen's kappa.

    Undefined statistics (zero expected disagreement) come back as NaN with a
    reason in ``undefined``.
    """
    if len(m.raters) < 2:
        raise ValidationError("agreement needs at least two raters")
    if len(m.units) == 0:
        raise ValidationError("agreement needs at least one unit (no clustered events)")
    v = m.values
    undefined: dict[str, str] = {}
    alpha = krippendorff_alpha_nominal(v)
    if math.isnan(alpha):
        undefined["krippendorff_alpha"] = "no variation in ratings: expected disagreement is zero"
    fk = fleiss_kappa(v)
    if math.isnan(fk):
        undefined["fleiss_kappa"] = "chance agreement is 1"
    pk = pairwise_kappa_matrix(v)
    iu = np.triu_indices(len(m.raters), k=1)
    pairs = pk[iu]
    if np.isnan(pairs).all():
        mean_k = math.nan
        undefined["mean_pairwise_cohen_kappa"] = "all rater pairs have chance agreement 1"
    else:
        mean_k = float(np.nanmean(pairs))
        if np.isnan(pairs).any():
            undefined["mean_pairwise_cohen_kappa"] = (
                f"{int(np.isnan(pairs).sum())} undefined pair(s) excluded from the mean")
    return AgreementStats(alpha, fk, mean_k, pk, m.raters, undefined)


@dataclass
class RemovalDistribution:
    k: int
    subsets: list[tuple[str, ...]]
    values: dict[str, list[float]]

    def summary(self, stat: str) -> dict:
        vals = np.array(self.values[stat], dtype=float)
        finite = vals[~np.isnan(vals)]
        if finite.size == 0:
            return {"k": self.k, "statistic": stat, "n_subsets": len(self.subsets),
                    "min": None, "q1": None, "median": None, "q3": None, "max": None,
                    "argmax_removed": None}
        q = np.percentile(finite, [0, 25, 50, 75, 100])
        best = int(np.nanargmax(vals))
        return {"k": self.k, "statistic": stat, "n_subsets": len(self.subsets),
                "min": q[0], "q1": q[1], "median": q[2], "q3": q[3], "max": q[4],
                "argmax_removed": list(self.subsets[best])}

    def argmax_subset(self, stat: str) -> tuple[str, ...]:
        return self.subsets[int(np.nanargmax(np.array(self.values[stat], dtype=float)))]


def removal_sensitivity(m: RatingMatrix, k_values: Sequence[int] | None = None,
                        override_budget: bool = False) -> dict[int, RemovalDistribution]:
    """Recompute the agreement statistics for every subset of removed raters.

    The unit set stays fixed; units may become all-zero rows after removal.
    Subsets are enumerated in lexicographic order of rater index.
    """
    n = len(m.raters)
    if n > MAX_RATERS_WITHOUT_OVERRIDE and not override_budget:
        raise ValidationError(
            f"{n} raters exceed the enumeration budget ({MAX_RATERS_WITHOUT_OVERRIDE}); "
            "pass override_budget=True")
    if k_values is None:
        k_values = range(1, n - 1)
    out: dict[int, RemovalDistribution] = {}
    for k in k_values:
        if k < 0 or n - k < 2:
            raise ValidationError(f"removing {k} of {n} raters leaves fewer than two")
        subsets: list[tuple[str, ...]] = []
        values: dict[str, list[float]] = {s: [] for s in STATISTICS}
        for removed in itertools.combinations(m.raters, k):
            st = agreement_stats(m.drop_raters(removed))
            subsets.append(removed)
            for s in STATISTICS:
                values[s].append(st.get(s))
        out[k] = RemovalDistribution(k, subsets, values)
    return out
