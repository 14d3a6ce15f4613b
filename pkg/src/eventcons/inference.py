"""Small-sample inference: t-tests, exact sign-flip tests, percentile bootstrap,
2x2 within-subject contrasts with Holm correction, and effect sizes.

Bootstrap resampling uses numpy's PCG64 generator (``numpy.random.default_rng``)
seeded explicitly; the seed is stored with every result.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .core import ValidationError

log = logging.getLogger(__name__)

LOG_OFFSET = 1e-8
TIE_TOL = 1e-12
MAX_SIGN_FLIP_N = 25
DEFAULT_RESAMPLES = 10_000

TIMINGS = ("Start", "QC")
TRANSPARENCIES = ("WB", "BB")


def log_transform(values, offset: float = LOG_OFFSET) -> np.ndarray:
    return np.log(np.asarray(values, dtype=float) + offset)


# --- tests -----------------------------------------------------------------------

@dataclass(frozen=True)
class SignFlipResult:
    p_value: float
    n_extreme: int
    n_configs: int


def sign_flip_test(d: Sequence[float], override_budget: bool = False,
                   chunk_bits: int = 16) -> SignFlipResult:
    """Exact two-sided sign-flip permutation test on the mean difference.

    All 2^n sign assignments are enumerated; the p-value is the fraction
    whose |mean| reaches the observed |mean| (within 1e-12).
    """
    d = np.asarray(d, dtype=float)
    n = d.size
    if n < 1:
        raise ValidationError("sign-flip test needs at least one difference")
    if n > MAX_SIGN_FLIP_N and not override_budget:
        raise ValidationError(f"n={n} exceeds the exact enumeration budget ({MAX_SIGN_FLIP_N})")
    observed = abs(d.mean())
    total = 1 << n
    low_bits = min(n, chunk_bits)
    low = np.arange(1 << low_bits)[:, None] >> np.arange(low_bits) & 1
    low_signs = 1.0 - 2.0 * low  # bit set -> negative sign
    low_sums = low_signs @ d[:low_bits]
    count = 0
    for high in range(1 << (n - low_bits)):
        high_sum = 0.0
        for b in range(n - low_bits):
            high_sum += -d[low_bits + b] if (high >> b) & 1 else d[low_bits + b]
        means = np.abs(low_sums + high_sum) / n
        count += int(np.count_nonzero(means >= observed - TIE_TOL))
    return SignFlipResult(count / total, count, total)


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p_value: float
    mean: float
    large_t: bool = False


def one_sample_t(x: Sequence[float], mu0: float = 0.0) -> TTestResult:
    """Two-sided one-sample t-test; zero variance gives t = 0 (no effect) or ±inf."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        raise ValidationError("t-test needs at least two observations")
    diff = x - mu0
    mean = float(diff.mean())
    sd = float(diff.std(ddof=1))
    df = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, df, 1.0, float(x.mean()))
        return TTestResult(math.copysign(math.inf, mean), df, 0.0, float(x.mean()), large_t=True)
    t = mean / (sd / math.sqrt(n))
    p = float(2.0 * stats.t.sf(abs(t), df))
    return TTestResult(t, df, min(p, 1.0), float(x.mean()))


def paired_t(d: Sequence[float]) -> TTestResult:
    return one_sample_t(d, 0.0)


def bootstrap_ci(values: Sequence[float], stat_fn: Callable[[np.ndarray], float] = np.mean,
                 resamples: int = DEFAULT_RESAMPLES, seed: int = 0,
                 level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap interval; endpoints are order statistics of the resampled statistic.

    Resampled statistics that are not finite (e.g. a standardized effect on a
    constant resample) are discarded.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValidationError("bootstrap needs data")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, x.size, size=(resamples, x.size))
    samples = x[idx]
    if stat_fn is np.mean:
        boot = samples.mean(axis=1)
    else:
        boot = np.array([stat_fn(s) for s in samples], dtype=float)
    boot = boot[np.isfinite(boot)]
    if boot.size == 0:
        return math.nan, math.nan
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(boot, [alpha, 1.0 - alpha], method="inverted_cdf")
    return float(lo), float(hi)


def cohen_dz(scores: Sequence[float]) -> float:
    """Mean over sample sd of within-subject scores; NaN when undefined."""
    x = np.asarray(scores, dtype=float)
    if x.size < 2:
        return math.nan
    sd = x.std(ddof=1)
    if sd == 0.0:
        return math.nan
    return float(x.mean() / sd)


@dataclass(frozen=True)
class EffectSize:
    dz: float
    ci: tuple[float, float]

    @property
    def defined(self) -> bool:
        return not math.isnan(self.dz)


def effect_size_dz(scores: Sequence[float], resamples: int = DEFAULT_RESAMPLES,
                   seed: int = 0) -> EffectSize:
    dz = cohen_dz(scores)
    if math.isnan(dz):
        return EffectSize(math.nan, (math.nan, math.nan))
    return EffectSize(dz, bootstrap_ci(scores, cohen_dz, resamples, seed))


def holm_correct(p_values: Sequence[float]) -> list[float]:
    """Holm step-down adjusted p-values, returned in input order."""
    p = np.asarray(p_values, dtype=float)
    m = p.size
    order = np.argsort(p, kind="stable")
    adj = np.empty(m)
    running = 0.0
    for rank, i in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p[i]))
        adj[i] = running
    return adj.tolist()


# --- contrasts -----------------------------------------------------------------

@dataclass
class ContrastResult:
    name: str
    n: int
    estimate: float
    estimate_ci: tuple[float, float]
    t: float
    df: int
    p_param: float
    p_perm: float
    dz: float
    dz_ci: tuple[float, float]
    back_transformed: bool = False
    p_holm: float | None = None
    a_mean: float | None = None
    b_mean: float | None = None
    large_t: bool = False
    scores: list[float] = field(default_factory=list, repr=False)

    @property
    def F(self) -> float:
        return self.t ** 2

    @property
    def eta_p_sq(self) -> float:
        if math.isinf(self.t):
            return 1.0
        f = self.t ** 2
        return f / (f + self.df)

    @property
    def ratio(self) -> float | None:
        return math.exp(self.estimate) if self.back_transformed else None

    @property
    def ratio_ci(self) -> tuple[float, float] | None:
        if not self.back_transformed:
            return None
        return (math.exp(self.estimate_ci[0]), math.exp(self.estimate_ci[1]))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("scores")
        d.update(F=self.F, eta_p_sq=self.eta_p_sq, ratio=self.ratio, ratio_ci=self.ratio_ci,
                 p_values={"param": self.p_param, "perm": self.p_perm, "holm": self.p_holm})
        return _clean(d)


def _clean(obj):
    if isinstance(obj, float):
        return None if math.isnan(obj) else (str(obj) if math.isinf(obj) else obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def analyze_scores(name: str, scores: Sequence[float], back_transform: bool = False,
                   resamples: int = DEFAULT_RESAMPLES, seed: int = 0,
                   override_budget: bool = False) -> ContrastResult:
    """t-test, exact sign-flip p, bootstrap CI of the mean and d_z for one score vector."""
    x = np.asarray(scores, dtype=float)
    tt = one_sample_t(x)
    sf = sign_flip_test(x, override_budget)
    es = effect_size_dz(x, resamples, seed)
    return ContrastResult(
        name=name, n=int(x.size), estimate=float(x.mean()),
        estimate_ci=bootstrap_ci(x, np.mean, resamples, seed),
        t=tt.t, df=tt.df, p_param=tt.p_value, p_perm=sf.p_value,
        dz=es.dz, dz_ci=es.ci, back_transformed=back_transform, large_t=tt.large_t,
        scores=x.tolist(),
    )


def paired_comparison(name: str, a: Sequence[float], b: Sequence[float],
                      resamples: int = DEFAULT_RESAMPLES, seed: int = 0,
                      override_budget: bool = False) -> ContrastResult:
    """Paired A-vs-B comparison on per-participant values (differences A - B)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValidationError("paired samples must have equal length")
    res = analyze_scores(name, a - b, False, resamples, seed, override_budget)
    res.a_mean, res.b_mean = float(a.mean()), float(b.mean())
    return res


def one_sample_comparison(name: str, a: Sequence[float], mu0: float,
                          resamples: int = DEFAULT_RESAMPLES, seed: int = 0,
                          override_budget: bool = False) -> ContrastResult:
    """Per-participant values against a scalar reference (differences A - mu0)."""
    a = np.asarray(a, dtype=float)
    res = analyze_scores(name, a - mu0, False, resamples, seed, override_budget)
    res.a_mean, res.b_mean = float(a.mean()), float(mu0)
    return res


@dataclass(frozen=True)
class FactorialCell:
    participant_id: str
    timing: str
    transparency: str
    value: float

    def __post_init__(self):
        if self.timing not in TIMINGS:
            raise ValidationError(f"timing must be one of {TIMINGS}, got {self.timing!r}")
        if self.transparency not in TRANSPARENCIES:
            raise ValidationError(
                f"transparency must be one of {TRANSPARENCIES}, got {self.transparency!r}")


CELL_ORDER = (("Start", "WB"), ("Start", "BB"), ("QC", "WB"), ("QC", "BB"))


def cell_matrix(cells: Iterable[FactorialCell]) -> tuple[list[str], np.ndarray]:
    """Participants with complete 2x2 data and their values in ``CELL_ORDER`` columns."""
    table: dict[str, dict[tuple[str, str], float]] = {}
    for c in cells:
        row = table.setdefault(c.participant_id, {})
        key = (c.timing, c.transparency)
        if key in row:
            raise ValidationError(f"duplicate cell {key} for participant {c.participant_id}")
        row[key] = float(c.value)
    participants, rows = [], []
    for pid, row in table.items():
        if len(row) < 4:
            log.warning("participant %s lacks %d cell(s); dropped from factorial inference",
                        pid, 4 - len(row))
            continue
        participants.append(pid)
        rows.append([row[k] for k in CELL_ORDER])
    if len(participants) < 2:
        raise ValidationError("factorial inference needs at least two complete participants")
    order = sorted(range(len(participants)), key=lambda i: participants[i])
    return [participants[i] for i in order], np.array([rows[i] for i in order])


def contrast_scores(m: np.ndarray) -> dict[str, np.ndarray]:
    sw, sb, qw, qb = m.T
    return {
        "AI main (WB vs BB)": (sw + qw) / 2.0 - (sb + qb) / 2.0,
        "Timing main (Start vs QC)": (sw + sb) / 2.0 - (qw + qb) / 2.0,
        "Interaction": (sw - sb) - (qw - qb),
    }


def simple_effect_scores(m: np.ndarray) -> dict[str, np.ndarray]:
    sw, sb, qw, qb = m.T
    return {
        "WB vs BB at Start": sw - sb,
        "WB vs BB at QC": qw - qb,
        "Start vs QC with WB": sw - qw,
        "Start vs QC with BB": sb - qb,
    }


def factorial_contrasts(cells: Iterable[FactorialCell], back_transform: bool = False,
                        resamples: int = DEFAULT_RESAMPLES, seed: int = 0,
                        override_budget: bool = False) -> list[ContrastResult]:
    """AI main, Timing main and interaction contrasts of a 2x2 within-subject design.

    Values are taken on the analysis scale as given (apply ``log_transform``
    first for ratio outcomes and pass ``back_transform=True``). Holm correction
    covers the two main effects; the interaction keeps its raw permutation p.
    """
    _, m = cell_matrix(cells)
    out = [analyze_scores(name, s, back_transform, resamples, seed, override_budget)
           for name, s in contrast_scores(m).items()]
    holm = holm_correct([out[0].p_perm, out[1].p_perm])
    out[0].p_holm, out[1].p_holm = holm
    return out


def simple_effects(cells: Iterable[FactorialCell], back_transform: bool = False,
                   resamples: int = DEFAULT_RESAMPLES, seed: int = 0,
                   override_budget: bool = False) -> list[ContrastResult]:
    """The four simple effects with Holm correction across the family of four."""
    _, m = cell_matrix(cells)
    out = [analyze_scores(name, s, back_transform, resamples, seed, override_budget)
           for name, s in simple_effect_scores(m).items()]
    for r, p in zip(out, holm_correct([r.p_perm for r in out])):
        r.p_holm = p
    return out
