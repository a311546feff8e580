"""Monte Carlo estimators and verifiers for cocycles of random walks.

Every estimator maps a per-trajectory record function over trajectory
indices through a :class:`~cocycle_lab.parallel.Pool` and reduces in index
order.
"""

from __future__ import annotations

import functools
import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import rng as rngmod
from .groups import GroupElement
from .measures import DrivingMeasure, FiniteTable, convolution_powers, lazify
from .parallel import Budget, Pool, charge, resolve
from .walk import (
    Cocycle,
    LengthCocycle,
    Trajectory,
    defect,
    generate,
    replace_increment,
    right_multiply,
)


class DegenerateFitWarning(UserWarning):
    pass


class EnumerationTooLarge(RuntimeError):
    pass


# -- small statistics helpers --------------------------------------------------------


def mean_se(x: Sequence[float]) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float(x.mean()) if len(x) else math.nan, math.nan
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def variance_se(x: Sequence[float]) -> tuple[float, float]:
    """Unbiased sample variance and its delta-method standard error."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    v = float(x.var(ddof=1))
    m4 = float(np.mean((x - x.mean()) ** 4))
    return v, math.sqrt(max(m4 - v * v, 0.0) / n)


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    slope_se: float
    r2: float
    points: int


def wls(x: Sequence[float], y: Sequence[float], w: Sequence[float] | None = None) -> LineFit:
    """Weighted least squares line with w = 1/variance of each y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if w is None else np.asarray(w, dtype=float)
    if len(x) < 2:
        raise ValueError("a line needs at least two points")
    sw = w.sum()
    xm = (w * x).sum() / sw
    ym = (w * y).sum() / sw
    sxx = (w * (x - xm) ** 2).sum()
    slope = (w * (x - xm) * (y - ym)).sum() / sxx
    intercept = ym - slope * xm
    resid = y - intercept - slope * x
    ss_res = (w * resid**2).sum()
    ss_tot = (w * (y - ym) ** 2).sum()
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    if len(x) > 2:
        # scale by the residual variance so mis-specified weights still give honest errors
        scale = max(ss_res / (len(x) - 2), 1.0)
        slope_se = math.sqrt(scale / sxx)
    else:
        slope_se = math.sqrt(1.0 / sxx)
    return LineFit(float(slope), float(intercept), float(slope_se), float(r2), len(x))


# -- reports --------------------------------------------------------------------------


@dataclass
class EstimateReport:
    estimate: float
    stderr: float
    samples: int
    n_grid: tuple[int, ...]
    method: str
    confidence: float = 0.99
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (math.isfinite(self.estimate) and math.isfinite(self.stderr)):
            raise ValueError(f"non-finite estimate from {self.method}")

    def interval(self) -> tuple[float, float]:
        z = stats.norm.ppf(0.5 + self.confidence / 2)
        return self.estimate - z * self.stderr, self.estimate + z * self.stderr


@dataclass
class DeviationConstants:
    """Grid suprema of E|Psi_{n,m}|^p (tau) and moments E|Q_1|^p (chi)."""

    tau: dict[float, float]
    tau_se: dict[float, float]
    chi: dict[float, float]
    chi_se: dict[float, float]
    grid: tuple[tuple[int, int], ...]
    samples: int
    is_length: bool = False

    def gromov_tau(self, p: float) -> float:
        """Same supremum on Gromov products, which are |Psi|/2 for length cocycles."""
        if not self.is_length:
            raise ValueError("Gromov-product constants only exist for length cocycles")
        return self.tau[p] / 2**p

    def upper_variance_constant(self) -> float:
        return 4 * self.chi[2] + 16 * self.tau[2]

    def influence_constant(self) -> float:
        return 8 * self.chi[2] + 32 * self.tau[2]


@dataclass
class TailPoint:
    n: int
    m: int
    thresholds: np.ndarray
    survival: np.ndarray
    counts: np.ndarray
    rate: float
    prefactor: float
    residual: float
    usable_bins: int

    @property
    def degenerate(self) -> bool:
        return not math.isfinite(self.rate)


@dataclass
class TailFit:
    thresholds: np.ndarray
    survival: np.ndarray
    rate: float
    prefactor: float
    residual: float
    statistic: str
    samples: int
    points: list[TailPoint]

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.rate for p in self.points])

    @property
    def variation(self) -> float:
        r = self.rates
        if not np.all(np.isfinite(r)):
            return math.inf
        return float((r.max() - r.min()) / r.mean())

    @property
    def tau0(self) -> float:
        return 1.0 / self.rate if self.rate > 0 else math.inf

    def passes(self, max_variation: float = 0.2) -> bool:
        r = self.rates
        return bool(np.all(np.isfinite(r)) and np.all(r > 0) and self.rate > 0 and self.variation < max_variation)


# -- per-trajectory record functions (module level so they pickle) -----------------------


def _prefix_values(measure, cocycle, n_grid, seed, offset, index):
    t = generate(measure, max(n_grid), offset + index, seed)
    return [cocycle.value(t, n) for n in n_grid]


def _fresh_value(measure, cocycle, n, seed, offset, index):
    return cocycle.value(generate(measure, n, offset + index, seed), n)


def _defect_record(measure, cocycle, grid, seed, gromov, index):
    horizon = max(n + m for n, m in grid)
    t = generate(measure, horizon, index, seed)
    q1 = cocycle.value(t, 1) if horizon >= 1 else 0.0
    vals = []
    for n, m in grid:
        psi = defect(cocycle, t, n, m).value
        vals.append(-psi / 2 if gromov else abs(psi))
    return q1, vals


# -- speed ---------------------------------------------------------------------------------


def estimate_speed(
    c: Cocycle,
    m: DrivingMeasure,
    n: int,
    samples: int,
    seed: int,
    pool: Pool | None = None,
    constants: DeviationConstants | None = None,
    budget: Budget | None = None,
) -> EstimateReport:
    """Mean of Q_n/n; with deviation constants the report carries the bracket on the limit."""
    if n < 1 or samples < 2:
        raise ValueError("need n >= 1 and at least two samples")
    charge(budget, n * samples, "speed")
    vals = resolve(pool).map(functools.partial(_fresh_value, m, c, n, seed, 0), samples)
    q = np.asarray(vals, dtype=float)
    est, se = mean_se(q / n)
    extras = {"mean_q": float(q.mean())}
    if constants is not None:
        tau1 = constants.tau[1]
        extras["bracket"] = ((q.mean() - tau1) / n, (q.mean() + tau1) / n)
        extras["tau1"] = tau1
    return EstimateReport(est, se, samples, (n,), "speed", extras=extras)


# -- deviation constants and tails -----------------------------------------------------------


def _defect_table(c, m, grid, samples, seed, pool, budget, gromov):
    horizon = max(n + mm for n, mm in grid)
    charge(budget, horizon * samples, "defect sweep")
    recs = resolve(pool).map(functools.partial(_defect_record, m, c, tuple(grid), seed, gromov), samples)
    q1 = np.array([r[0] for r in recs], dtype=float)
    vals = np.array([r[1] for r in recs], dtype=float).reshape(samples, len(grid))
    return q1, vals


def deviation_constants(
    c: Cocycle,
    m: DrivingMeasure,
    grid: Sequence[tuple[int, int]],
    samples: int,
    seed: int,
    p_values: Sequence[float] = (1, 2),
    pool: Pool | None = None,
    budget: Budget | None = None,
) -> DeviationConstants:
    """Empirical tau_p and chi_p over a finite (n, m) grid, sharing trajectories across the grid."""
    q1, vals = _defect_table(c, m, grid, samples, seed, pool, budget, False)
    tau, tau_se, chi, chi_se = {}, {}, {}, {}
    for p in p_values:
        powered = np.abs(vals) ** p
        means = powered.mean(axis=0)
        j = int(np.argmax(means))
        tau[p] = float(means[j])
        tau_se[p] = float(powered[:, j].std(ddof=1) / math.sqrt(samples))
        chi[p], chi_se[p] = mean_se(np.abs(q1) ** p)
    return DeviationConstants(tau, tau_se, chi, chi_se, tuple(grid), samples, c.is_length)


def _fit_tail(thresholds, counts, samples, min_bins):
    surv = counts / samples
    usable = (counts > 0) & (surv < 1)
    if usable.sum() < min_bins:
        return math.nan, math.nan, math.nan, int(usable.sum())
    x = thresholds[usable]
    s = surv[usable]
    # binomial delta method: Var(log S) ~ (1 - S) / (N S)
    w = samples * s / (1 - s)
    fit = wls(x, np.log(s), w)
    resid = float(np.sqrt(np.mean((np.log(s) - fit.intercept - fit.slope * x) ** 2)))
    return -fit.slope, math.exp(fit.intercept), resid, int(usable.sum())


def deviation_tail(
    c: Cocycle,
    m: DrivingMeasure,
    grid: Sequence[tuple[int, int]],
    thresholds: Sequence[float],
    samples: int,
    seed: int,
    pool: Pool | None = None,
    budget: Budget | None = None,
    min_bins: int = 4,
) -> TailFit:
    """Survival curves of the defect statistic at each grid point and their log-linear fits.

    Grid points share trajectories, so all curves come from the same samples.
    """
    if m.tail_class not in ("finite", "exponential"):
        raise ValueError("tail fits need a measure with a declared exponential tail")
    gromov = c.is_length
    _, vals = _defect_table(c, m, grid, samples, seed, pool, budget, gromov)
    th = np.asarray(thresholds, dtype=float)
    points = []
    worst = np.zeros(len(th))
    for j, (n, mm) in enumerate(grid):
        counts = (vals[:, j][:, None] >= th[None, :]).sum(axis=0)
        rate, pref, resid, used = _fit_tail(th, counts, samples, min_bins)
        if not math.isfinite(rate):
            warnings.warn(f"tail at (n={n}, m={mm}) has only {used} usable bins; no fit", DegenerateFitWarning)
        points.append(TailPoint(n, mm, th, counts / samples, counts, rate, pref, resid, used))
        worst = np.maximum(worst, counts)
    rate, pref, resid, _ = _fit_tail(th, worst, samples, min_bins)
    return TailFit(th, worst / samples, rate, pref, resid, "gromov" if gromov else "abs_defect", samples, points)


# -- variance, higher moments -----------------------------------------------------------------


@dataclass
class CurvePoint:
    n: int
    value: float
    stderr: float


@dataclass
class VarianceCurve:
    points: list[CurvePoint]
    bound: float | None
    samples: int

    def violations(self) -> list[int]:
        if self.bound is None:
            return []
        return [p.n for p in self.points if p.value > self.bound + 5 * p.stderr]

    @property
    def limit(self) -> CurvePoint:
        return self.points[-1]


def _fresh_values(c, m, n_grid, samples, seed, pool, budget, what):
    charge(budget, sum(n_grid) * samples, what)
    pool = resolve(pool)
    out = []
    for k, n in enumerate(n_grid):
        vals = pool.map(functools.partial(_fresh_value, m, c, n, seed, k * samples), samples)
        out.append(np.asarray(vals, dtype=float))
    return out


def estimate_variance_curve(
    c: Cocycle,
    m: DrivingMeasure,
    n_grid: Sequence[int],
    samples: int,
    seed: int,
    pool: Pool | None = None,
    constants: DeviationConstants | None = None,
    budget: Budget | None = None,
) -> VarianceCurve:
    """Var[Q_n]/n on fresh trajectories per n, checked against 4 chi_2 + 16 tau_2."""
    if not n_grid:
        raise ValueError("empty n grid")
    pts = []
    for n, q in zip(n_grid, _fresh_values(c, m, n_grid, samples, seed, pool, budget, "variance curve")):
        v, se = variance_se(q)
        pts.append(CurvePoint(n, v / n, se / n))
    bound = None if constants is None else constants.upper_variance_constant()
    return VarianceCurve(pts, bound, samples)


@dataclass
class MomentCurve:
    p: float
    points: list[CurvePoint]
    trend: LineFit
    p_value: float

    def passes(self, alpha: float = 0.01) -> bool:
        return self.p_value > alpha


def higher_moment_ratio(
    c: Cocycle,
    m: DrivingMeasure,
    p: float,
    n_grid: Sequence[int],
    samples: int,
    seed: int,
    pool: Pool | None = None,
    budget: Budget | None = None,
) -> MomentCurve:
    """E|Q_n - E Q_n|^p / n^{p/2} per n, with a one-sided test for growth in log n."""
    if p <= 1:
        raise ValueError("moment order must exceed 1")
    pts = []
    for n, q in zip(n_grid, _fresh_values(c, m, n_grid, samples, seed, pool, budget, "higher moments")):
        r = np.abs(q - q.mean()) ** p / n ** (p / 2)
        est, se = mean_se(r)
        pts.append(CurvePoint(n, est, se))
    x = np.log([pt.n for pt in pts])
    y = np.array([pt.value for pt in pts])
    se = np.array([max(pt.stderr, 1e-300) for pt in pts])
    fit = wls(x, y, 1 / se**2)
    pval = float(stats.norm.sf(fit.slope / fit.slope_se)) if fit.slope_se > 0 else (0.0 if fit.slope > 0 else 1.0)
    return MomentCurve(p, pts, fit, pval)


# -- Efron-Stein ----------------------------------------------------------------------------


def replaced_value(c: Cocycle, t: Trajectory, k: int, x_new: GroupElement, n: int) -> float:
    """Q_n of the path with X_k replaced, without materializing it where possible."""
    if isinstance(c, LengthCocycle):
        node = right_multiply(t.nodes[k - 1], x_new.syllables, t.backend.orders)
        orders = t.backend.orders
        for w in t.increments[k:n]:
            node = right_multiply(node, w, orders)
        return node.length
    return c.value(replace_increment(t, k, x_new), n)


def _es_record(measure, cocycle, n, seed, index):
    t = generate(measure, n, index, seed)
    q = cocycle.value(t, n)
    rng = rngmod.substream(seed, index, rngmod.REPLACEMENT)
    fresh = measure.sample(rng, n)
    d2 = np.empty(n)
    for k in range(1, n + 1):
        d2[k - 1] = (replaced_value(cocycle, t, k, fresh[k - 1], n) - q) ** 2
    return q, d2


@dataclass
class EfronSteinResult:
    n: int
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    influence: np.ndarray
    influence_se: np.ndarray
    influence_bound: float | None

    @property
    def combined_se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    def inequality_holds(self, k: float = 3.0) -> bool:
        return self.lhs <= self.rhs + k * self.combined_se

    def equality_holds(self, k: float = 3.0) -> bool:
        return abs(self.lhs - self.rhs) <= k * self.combined_se

    def influence_violations(self, k: float = 3.0) -> list[int]:
        if self.influence_bound is None:
            return []
        bad = self.influence > self.influence_bound + k * self.influence_se
        return [int(i) + 1 for i in np.flatnonzero(bad)]


def efron_stein_check(
    c: Cocycle,
    m: DrivingMeasure,
    n: int,
    samples: int,
    seed: int,
    pool: Pool | None = None,
    constants: DeviationConstants | None = None,
    budget: Budget | None = None,
) -> EfronSteinResult:
    """Var[Q_n] against half the summed squared effect of resampling each increment."""
    charge(budget, n * (n + 1) / 2 * samples + n * samples, "Efron-Stein")
    recs = resolve(pool).map(functools.partial(_es_record, m, c, n, seed), samples)
    q = np.array([r[0] for r in recs], dtype=float)
    d2 = np.array([r[1] for r in recs])
    lhs, lhs_se = variance_se(q)
    rhs, rhs_se = mean_se(0.5 * d2.sum(axis=1))
    infl = d2.mean(axis=0)
    infl_se = d2.std(axis=0, ddof=1) / math.sqrt(samples)
    bound = None if constants is None else constants.influence_constant()
    return EfronSteinResult(n, lhs, lhs_se, rhs, rhs_se, infl, infl_se, bound)


# -- CLT -----------------------------------------------------------------------------------------


@dataclass
class CltPoint:
    n: int
    ks: float
    ks_pvalue: float
    sigma2: float
    sigma2_se: float
    skewness: float
    excess_kurtosis: float
    qq_theoretical: np.ndarray
    qq_empirical: np.ndarray
    degenerate: bool
    ks_folded: float | None = None


@dataclass
class CltResult:
    points: list[CltPoint]
    samples: int

    def ks_decreasing(self) -> bool:
        ks = [p.ks for p in self.points]
        return all(b < a for a, b in zip(ks, ks[1:]))

    def point(self, n: int) -> CltPoint:
        for p in self.points:
            if p.n == n:
                return p
        raise KeyError(n)


QQ_PROBS = np.linspace(0.01, 0.99, 99)


def clt_suite(
    c: Cocycle,
    m: DrivingMeasure,
    n_grid: Sequence[int],
    samples: int,
    seed: int,
    pool: Pool | None = None,
    folded_oracle: bool = False,
    budget: Budget | None = None,
) -> CltResult:
    """KS distance of (Q_n - mean)/sqrt(n) from the fitted centered Normal, per n.

    With ``folded_oracle`` each point also carries the KS distance of Q_n/sqrt(n)
    from a half-normal of matched second moment, the limit law of |S_n| on Z.
    """
    if samples < 1000:
        raise ValueError("the CLT suite needs at least 1000 samples")
    grid = tuple(sorted(n_grid))
    charge(budget, grid[-1] * samples, "CLT")
    recs = resolve(pool).map(functools.partial(_prefix_values, m, c, grid, seed, 0), samples)
    table = np.array(recs, dtype=float).reshape(samples, len(grid))
    out = []
    for j, n in enumerate(grid):
        q = table[:, j]
        y = (q - q.mean()) / math.sqrt(n)
        s2, s2_se = variance_se(y)
        degenerate = s2 < 1e-6
        if degenerate:
            ks, pv = 1.0, 0.0
            skew = kurt = 0.0
        else:
            res = stats.kstest(y, stats.norm(0, math.sqrt(s2)).cdf)
            ks, pv = float(res.statistic), float(res.pvalue)
            skew = float(stats.skew(y))
            kurt = float(stats.kurtosis(y))
        folded = None
        if folded_oracle:
            r = q / math.sqrt(n)
            scale = math.sqrt(float(np.mean(r * r)))
            folded = float(stats.kstest(r, stats.halfnorm(scale=scale).cdf).statistic) if scale > 0 else 1.0
        theo = stats.norm.ppf(QQ_PROBS) * math.sqrt(max(s2, 0.0))
        emp = np.quantile(y, QQ_PROBS)
        out.append(CltPoint(n, ks, pv, s2, s2_se, skew, kurt, theo, emp, degenerate, folded))
    return CltResult(out, samples)


# -- linear progress -------------------------------------------------------------------------------


@dataclass
class ProgressResult:
    C: float
    n_grid: tuple[int, ...]
    probabilities: np.ndarray
    counts: np.ndarray
    samples: int
    fit: LineFit | None

    def decays(self, min_r2: float = 0.9) -> bool:
        return self.fit is not None and self.fit.slope < 0 and self.fit.r2 >= min_r2

    def no_decay(self) -> bool:
        return self.fit is None or self.fit.slope >= 0


def _progress_record(measure, n_grid, seed, index):
    t = generate(measure, max(n_grid), index, seed)
    return [t.length_at(n) for n in n_grid]


def linear_progress_tail(
    m: DrivingMeasure,
    C: float,
    n_grid: Sequence[int],
    samples: int,
    seed: int,
    pool: Pool | None = None,
    budget: Budget | None = None,
) -> ProgressResult:
    """P[d(id, Z_n) <= n/C] per n and the fit of its log against n (zero-count bins dropped)."""
    grid = tuple(sorted(n_grid))
    charge(budget, grid[-1] * samples, "linear progress")
    recs = resolve(pool).map(functools.partial(_progress_record, m, grid, seed), samples)
    d = np.array(recs, dtype=float).reshape(samples, len(grid))
    counts = (d <= np.array(grid, dtype=float)[None, :] / C).sum(axis=0)
    probs = counts / samples
    keep = counts > 0
    fit = None
    if keep.sum() >= 3:
        x = np.array(grid, dtype=float)[keep]
        p = probs[keep]
        # weights from the binomial variance of log P; saturated bins get the largest finite weight
        w = np.where(p < 1, counts[keep] / np.maximum(1 - p, 1e-12), 0.0)
        w = np.where(w > 0, w, w.max() if w.max() > 0 else 1.0)
        fit = wls(x, np.log(p), w)
    return ProgressResult(C, grid, probs, counts, samples, fit)


# -- lazy decomposition -----------------------------------------------------------------------------


@dataclass
class LazyCheck:
    n: int
    q: float
    tv: dict[int, float]
    binomial_error: float
    independence_error: float

    @property
    def max_tv(self) -> float:
        return max(self.tv.values()) if self.tv else 0.0


def lazy_decomposition_check(m: DrivingMeasure, n: int, max_tuples: int = 10**7) -> LazyCheck:
    """Exact comparison of Law(Z_n | N_n = k) with the stripped walk at time n - k.

    N_n counts identity increments.  All laws come from full enumeration of
    increment tuples, so equalities are checked to rounding error.
    """
    if not m.is_finite:
        raise ValueError("exact enumeration needs a finitely supported measure")
    tab = m.to_table()
    q = tab.pmf(GroupElement(()))
    if q <= 0:
        raise ValueError("measure has no mass at the identity")
    size = len(tab.support) ** n
    if size > max_tuples:
        raise EnumerationTooLarge(f"{size} increment tuples exceed the cap {max_tuples}")
    tilde = lazify(tab).to_table()
    b = tab.backend
    support = tab.support
    probs = tab.probs

    cond: dict[int, dict[GroupElement, float]] = {k: {} for k in range(n + 1)}
    n_law = np.zeros(n + 1)
    joint: dict[tuple, float] = {}
    for combo in itertools.product(range(len(support)), repeat=n):
        p = math.prod(float(probs[i]) for i in combo)
        z = GroupElement(())
        idle = []
        moves = []
        for i in combo:
            g = support[i]
            z = b.multiply(z, g)
            if g.is_identity():
                idle.append(1)
            else:
                idle.append(0)
                moves.append(g)
        k = sum(idle)
        n_law[k] += p
        cond[k][z] = cond[k].get(z, 0.0) + p
        key = (tuple(idle), tuple(moves))
        joint[key] = joint.get(key, 0.0) + p

    tilde_powers = _exact_powers(tilde, n)
    tv = {}
    for k in range(n + 1):
        if n_law[k] == 0:
            continue
        law = {z: p / n_law[k] for z, p in cond[k].items()}
        target = tilde_powers[n - k]
        keys = set(law) | set(target)
        tv[k] = 0.5 * math.fsum(abs(law.get(z, 0.0) - target.get(z, 0.0)) for z in keys)
    binom = stats.binom.pmf(np.arange(n + 1), n, q)
    indep = 0.0
    for (idle, moves), p in joint.items():
        k = sum(idle)
        expect = q**k * (1 - q) ** (n - k) * math.prod(tilde.pmf(g) for g in moves)
        indep = max(indep, abs(p - expect))
    return LazyCheck(n, q, tv, float(np.max(np.abs(n_law - binom))), indep)


def _exact_powers(tab: FiniteTable, n: int) -> list[dict[GroupElement, float]]:
    return [d.probs for d in convolution_powers(tab, n)]
