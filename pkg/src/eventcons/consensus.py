"""Two-class Dawid-Skene EM over clustered event annotations.

Each non-noise cluster either holds one true event or none. Annotator k's
observation for cluster j is ``A[j, k] = 1`` when k has a member in the
cluster. Sensitivity ``s_k`` and specificity ``p_k`` are estimated jointly
with the per-cluster event probability ``P_j``. The E-step works in log
space; noise annotations never enter the model.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .clustering import Clustering
from .core import GroundTruth, GroundTruthKind, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmConfig:
    init_sensitivity: float = 0.99
    init_specificity: float = 0.99
    init_prob: float = 0.5
    tolerance: float = 1e-7
    max_iterations: int = 1000
    tau: float = 0.5
    log_epsilon: float = 1e-10

    def __post_init__(self):
        for name in ("init_sensitivity", "init_specificity", "init_prob"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValidationError(f"{name} must lie in (0, 1), got {v}")
        if self.tolerance <= 0:
            raise ValidationError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class AnnotatorQuality:
    annotator_id: str
    sensitivity: float
    specificity: float

    @property
    def balanced_accuracy(self) -> float:
        return (self.sensitivity + self.specificity) / 2.0

    def to_dict(self) -> dict:
        return {"annotator_id": self.annotator_id, "sensitivity": self.sensitivity,
                "specificity": self.specificity, "balanced_accuracy": self.balanced_accuracy}


@dataclass
class ConsensusResult:
    cluster_probs: dict[int, float]
    qualities: list[AnnotatorQuality]
    cluster_times: dict[int, tuple[str, float]]
    tau: float
    iterations_used: int
    converged: bool
    delta_trace: list[float] = field(default_factory=list)
    prob_history: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def consensus_events(self) -> list[tuple[str, float]]:
        return list(select_consensus(self, self.tau).events)

    @property
    def consensus_ids(self) -> list[int]:
        return [j for j, p in self.cluster_probs.items() if is_selected(p, self.tau)]

    def quality(self, annotator_id: str) -> AnnotatorQuality:
        return next(q for q in self.qualities if q.annotator_id == annotator_id)

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "iterations_used": self.iterations_used,
            "converged": self.converged,
            "clusters": [
                {"id": j, "recording_id": self.cluster_times[j][0],
                 "time_ms": self.cluster_times[j][1], "probability": p,
                 "consensus": is_selected(p, self.tau)}
                for j, p in self.cluster_probs.items()
            ],
            "qualities": [q.to_dict() for q in self.qualities],
            "consensus_events": [{"recording_id": r, "time_ms": t}
                                 for r, t in self.consensus_events],
            "max_abs_delta_trace": self.delta_trace,
        }


def indicator_matrix(c: Clustering) -> np.ndarray:
    """A[j, k] = 1 when annotator k has a member in cluster j."""
    col = {k: i for i, k in enumerate(c.annotators)}
    a = np.zeros((len(c.clusters), len(c.annotators)))
    for j, cl in enumerate(c.clusters):
        for k in cl.annotator_ids:
            a[j, col[k]] = 1.0
    return a


def em_step(a: np.ndarray, s: np.ndarray, p: np.ndarray, prior: np.ndarray, eps: float):
    """One E-step followed by one M-step; returns (P, s, p), all clipped to [0, 1]."""
    log_s, log_1s = np.log(s + eps), np.log(1.0 - s + eps)
    log_p, log_1p = np.log(p + eps), np.log(1.0 - p + eps)
    terms1 = np.column_stack([a * log_s + (1.0 - a) * log_1s, np.log(prior + eps)])
    terms2 = np.column_stack([a * log_1p + (1.0 - a) * log_p, np.log(1.0 - prior + eps)])
    # exactly rounded sums: symmetric evidence gives equal totals and hence P = 0.5 exactly
    log_d1 = np.array([math.fsum(row) for row in terms1])
    log_d2 = np.array([math.fsum(row) for row in terms2])
    probs = expit(log_d1 - log_d2)
    probs = np.clip(probs, 0.0, 1.0)

    q = 1.0 - probs
    s_new = np.array([math.fsum(col) for col in (probs[:, None] * a).T]) / (math.fsum(probs) + eps)
    p_new = np.array([math.fsum(col) for col in (q[:, None] * (1.0 - a)).T]) / (math.fsum(q) + eps)
    return probs, np.clip(s_new, 0.0, 1.0), np.clip(p_new, 0.0, 1.0)


def run_em(c: Clustering, config: EmConfig = EmConfig()) -> ConsensusResult:
    """Estimate cluster event probabilities and annotator sensitivity/specificity.

    Iterates E then M until ``max_j |P_j - P_j_prev| < tolerance`` or
    ``max_iterations``. Non-convergence is reported through ``converged``.
    """
    if not c.clusters:
        raise ValidationError("EM needs at least one non-noise cluster")
    k = len(c.annotators)
    if k < 1:
        raise ValidationError("EM needs at least one annotator")
    if k == 1:
        warnings.warn("consensus from a single annotator is vacuous", RuntimeWarning, stacklevel=2)

    a = indicator_matrix(c)
    s = np.full(k, config.init_sensitivity)
    p = np.full(k, config.init_specificity)
    probs = np.full(len(c.clusters), config.init_prob)
    trace: list[float] = []
    history: list[np.ndarray] = []
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        new, s, p = em_step(a, s, p, probs, config.log_epsilon)
        delta = float(np.max(np.abs(new - probs)))
        probs = new
        trace.append(delta)
        history.append(probs.copy())
        if delta < config.tolerance:
            converged = True
            break
    if not converged:
        log.warning("EM did not converge in %d iterations (last delta %.3g)", it, trace[-1])

    return ConsensusResult(
        cluster_probs={cl.cluster_id: float(pj) for cl, pj in zip(c.clusters, probs)},
        qualities=[AnnotatorQuality(kid, float(sk), float(pk))
                   for kid, sk, pk in zip(c.annotators, s, p)],
        cluster_times={cl.cluster_id: (cl.recording_id, cl.centroid_ms) for cl in c.clusters},
        tau=config.tau,
        iterations_used=it,
        converged=converged,
        delta_trace=trace,
        prob_history=history,
    )


SELECT_TOL = 1e-12


def is_selected(prob: float, tau: float) -> bool:
    """``prob >= tau`` with a 1e-12 allowance, so exact ties survive rounding."""
    return prob >= tau - SELECT_TOL


def select_consensus(result: ConsensusResult, tau: float | None = None) -> GroundTruth:
    """Consensus ground truth: clusters with ``P_j >= tau`` at their mean onset."""
    tau = result.tau if tau is None else tau
    events = [result.cluster_times[j] for j, pj in result.cluster_probs.items()
              if is_selected(pj, tau)]
    return GroundTruth(GroundTruthKind.CONSENSUS, tuple(events))


def rank_by_balanced_accuracy(result: ConsensusResult) -> list[AnnotatorQuality]:
    return sorted(result.qualities, key=lambda q: -q.balanced_accuracy)
