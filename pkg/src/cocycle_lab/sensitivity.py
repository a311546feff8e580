"""Girsanov reweighting, exact enumeration checks, speed derivatives and the Lipschitz audit."""

from __future__ import annotations

import functools
import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from . import rng as rngmod
from .estimators import DeviationConstants, deviation_constants, mean_se
from .measures import FiniteTable, IncomparableMeasuresError, MeasureCurve, measure_distance, moment
from .parallel import Budget, Pool, charge, resolve
from .walk import Cocycle, Trajectory, from_uniforms, generate


class MalformedCurveError(ValueError):
    """The direction of a curve is not centered under its base measure."""


class HighVarianceWarning(UserWarning):
    """Importance weights are so dispersed that the effective sample size is tiny."""


# -- trajectory statistics (picklable) --------------------------------------------------------


@dataclass(frozen=True)
class EndLength:
    """F = d(id, Z_n) at the end of the trajectory."""

    def __call__(self, t: Trajectory) -> float:
        return float(t.length_at(t.n))


@dataclass(frozen=True)
class Constant:
    value: float = 1.0

    def __call__(self, t: Trajectory) -> float:
        return self.value


@dataclass(frozen=True)
class CocycleAt:
    """F = Q_n for a cocycle evaluated at the end of the trajectory."""

    cocycle: Cocycle

    def __call__(self, t: Trajectory) -> float:
        return float(self.cocycle.value(t, t.n))


def _aligned(m0: FiniteTable, mt: FiniteTable) -> np.ndarray:
    """Probabilities of ``mt`` in the support order of ``m0``."""
    if set(m0.support) != set(mt.support):
        raise IncomparableMeasuresError("reweighting needs identical supports")
    return np.array([mt.pmf(g) for g in m0.support])


# -- Girsanov ------------------------------------------------------------------------------------


@dataclass
class GirsanovResult:
    estimate: float
    stderr: float
    direct: float
    direct_se: float
    weight_mean: float
    weight_se: float
    ess: float
    samples: int

    @property
    def combined_se(self) -> float:
        return math.hypot(self.stderr, self.direct_se)

    def agrees(self, k: float = 3.0) -> bool:
        return abs(self.estimate - self.direct) <= k * self.combined_se

    def weights_normalized(self, k: float = 4.0) -> bool:
        return abs(self.weight_mean - 1.0) <= k * self.weight_se


DIRECT_OFFSET = 1 << 40


def _girsanov_record(F, m0, log_ratio, n, seed, index):
    t = generate(m0, n, index, seed)
    return F(t), float(np.sum(log_ratio[t.indices]))


def _direct_record(F, mt, n, seed, index):
    return F(generate(mt, n, DIRECT_OFFSET + index, seed))


def girsanov_estimate(
    F: Callable[[Trajectory], float],
    m0: FiniteTable,
    mt: FiniteTable,
    n: int,
    samples: int,
    seed: int,
    pool: Pool | None = None,
    budget: Budget | None = None,
) -> GirsanovResult:
    """E^{mt}[F] from m0-paths weighted by prod mt(X_j)/m0(X_j), next to a direct mt estimate."""
    charge(budget, 2 * n * samples, "Girsanov")
    pt = _aligned(m0, mt)
    log_ratio = np.log(pt) - np.log(m0.probs)
    pool = resolve(pool)
    recs = pool.map(functools.partial(_girsanov_record, F, m0, log_ratio, n, seed), samples)
    f = np.array([r[0] for r in recs])
    w = np.exp([r[1] for r in recs])
    est, se = mean_se(f * w)
    wm, wse = mean_se(w)
    ess = float(w.sum() ** 2 / np.sum(w * w))
    if ess < 0.1 * samples:
        warnings.warn(f"effective sample size {ess:.0f} of {samples}", HighVarianceWarning)
    direct = np.array(pool.map(functools.partial(_direct_record, F, mt, n, seed), samples))
    d, dse = mean_se(direct)
    return GirsanovResult(est, se, d, dse, wm, wse, ess, samples)


def _tuples(m: FiniteTable, n: int, cap: int):
    size = len(m.support) ** n
    if size > cap:
        raise ValueError(f"{size} increment tuples exceed the enumeration cap {cap}")
    return itertools.product(range(len(m.support)), repeat=n)


def _path(m: FiniteTable, combo) -> Trajectory:
    return Trajectory(m.backend, [m._syl[i] for i in combo], indices=np.array(combo, dtype=int))


def exact_expectation(F: Callable[[Trajectory], float], m: FiniteTable, n: int, cap: int = 10**6) -> float:
    """E^m[F] over all increment tuples of length n."""
    terms = []
    for combo in _tuples(m, n, cap):
        terms.append(F(_path(m, combo)) * math.prod(float(m.probs[i]) for i in combo))
    return math.fsum(terms)


@dataclass
class GirsanovIdentity:
    reweighted: float
    direct: float

    @property
    def difference(self) -> float:
        return abs(self.reweighted - self.direct)


def girsanov_identity(
    F: Callable[[Trajectory], float], m0: FiniteTable, mt: FiniteTable, n: int, cap: int = 10**6
) -> GirsanovIdentity:
    """Both sides of the change-of-measure formula summed over every increment tuple."""
    pt = _aligned(m0, mt)
    p0 = m0.probs
    lhs, rhs = [], []
    for combo in _tuples(m0, n, cap):
        f = F(_path(m0, combo))
        w = math.prod(float(pt[i] / p0[i]) for i in combo)
        base = math.prod(float(p0[i]) for i in combo)
        lhs.append(f * w * base)
        rhs.append(f * math.prod(float(pt[i]) for i in combo))
    return GirsanovIdentity(math.fsum(lhs), math.fsum(rhs))


def expectation_polynomial(F: Callable[[Trajectory], float], curve: MeasureCurve, n: int, cap: int = 10**6) -> np.ndarray:
    """Coefficients (lowest degree first) of t -> E^{mu_t}[F] for a linear curve."""
    p0 = curve.p0
    dp = curve.p1 - curve.p0
    coef = np.zeros(n + 1)
    for combo in _tuples(curve.mu0, n, cap):
        poly = np.array([1.0])
        for i in combo:
            poly = P.polymul(poly, [p0[i], dp[i]])
        f = F(_path(curve.mu0, combo))
        coef[: len(poly)] += f * poly
    return coef


# -- speed derivative ------------------------------------------------------------------------------


@dataclass
class DerivativePoint:
    n: int
    covariance: float
    covariance_se: float
    finite_difference: float
    finite_difference_se: float

    @property
    def combined_se(self) -> float:
        return math.hypot(self.covariance_se, self.finite_difference_se)


@dataclass
class DerivativeResult:
    points: list[DerivativePoint]
    ts: tuple[float, float]
    samples: int
    raw_differences: dict[float, float]

    @property
    def limit(self) -> DerivativePoint:
        return self.points[-1]

    @property
    def stability_delta(self) -> float:
        if len(self.points) < 2:
            return math.nan
        return self.points[-1].covariance - self.points[-2].covariance

    def agrees(self, k: float = 3.0) -> bool:
        p = self.limit
        return abs(p.covariance - p.finite_difference) <= k * p.combined_se

    def sign_consistent(self, k: float = 3.0) -> bool:
        for p in self.points:
            big = abs(p.covariance) > k * p.covariance_se and abs(p.finite_difference) > k * p.finite_difference_se
            if big and np.sign(p.covariance) != np.sign(p.finite_difference):
                return False
        return True


def _covariance_record(c, m0, nu, n_grid, seed, index):
    t = generate(m0, n_grid[-1], index, seed)
    mart = np.concatenate([[0.0], np.cumsum(nu[t.indices])])
    return [(c.value(t, n), mart[n]) for n in n_grid]


def _coupled_record(c, measures, n_grid, seed, index):
    u = rngmod.substream(seed, index, rngmod.COUPLING).random(n_grid[-1])
    out = []
    for m in measures:
        t = from_uniforms(m, u)
        out.append([c.value(t, n) for n in n_grid])
    return out


def speed_derivative(
    curve: MeasureCurve,
    c: Cocycle,
    n_grid: Sequence[int],
    samples: int,
    seed: int,
    ts: tuple[float, float] = (0.05, 0.025),
    pool: Pool | None = None,
    budget: Budget | None = None,
) -> DerivativeResult:
    """(1/n) Cov(Q_n, sum_j nu(X_j)) under mu_0 against a Richardson finite difference in t.

    The finite difference couples mu_0, mu_{t/2} and mu_t through shared
    uniforms on a separate random stream, so the two estimators are
    independent and their standard errors combine in quadrature.
    """
    nu = curve.direction_array(0.0)
    drift = float(np.dot(nu, curve.p0))
    if abs(drift) > 1e-9:
        raise MalformedCurveError(f"direction has mean {drift:.3g} under the base measure")
    t1, t2 = ts
    if not math.isclose(t2, t1 / 2):
        raise ValueError("Richardson step needs the second t to be half the first")
    grid = tuple(sorted(n_grid))
    charge(budget, 4 * grid[-1] * samples, "speed derivative")
    pool = resolve(pool)
    cov_recs = pool.map(functools.partial(_covariance_record, c, curve.mu0, nu, grid, seed), samples)
    cov = np.array(cov_recs, dtype=float)  # samples x grid x 2
    measures = (curve.mu0, curve.at(t2), curve.at(t1))
    fd = np.array(pool.map(functools.partial(_coupled_record, c, measures, grid, seed), samples), dtype=float)
    points = []
    raw = {}
    for j, n in enumerate(grid):
        q = cov[:, j, 0]
        mrt = cov[:, j, 1]
        prod = (q - q.mean()) * (mrt - mrt.mean()) / n
        cv, cse = mean_se(prod)
        cv *= samples / (samples - 1)
        d_half = (fd[:, 1, j] - fd[:, 0, j]) / (n * t2)
        d_full = (fd[:, 2, j] - fd[:, 0, j]) / (n * t1)
        rich, rse = mean_se(2 * d_half - d_full)
        points.append(DerivativePoint(n, cv, cse, rich, rse))
        if j == len(grid) - 1:
            raw = {t1: float(d_full.mean()), t2: float(d_half.mean())}
    return DerivativeResult(points, (t1, t2), samples, raw)


# -- Lipschitz audit -------------------------------------------------------------------------------


@dataclass
class LipschitzAudit:
    delta: float
    delta_se: float
    nu: float
    constant: float
    chi1: float
    tau1_sup: float
    nu_sup: float

    @property
    def ratio(self) -> float:
        return self.delta / self.nu if self.nu > 0 else 0.0

    @property
    def slack(self) -> float:
        return self.constant * self.nu + 3 * self.delta_se - self.delta

    def passes(self) -> bool:
        return self.slack >= 0


def _pair_record(c, m0, m1, n, seed, index):
    u = rngmod.substream(seed, index, rngmod.COUPLING).random(n)
    return c.value(from_uniforms(m1, u), n) - c.value(from_uniforms(m0, u), n)


def lipschitz_audit(
    m0: FiniteTable,
    m1: FiniteTable,
    c: Cocycle,
    n: int,
    samples: int,
    seed: int,
    grid: Sequence[tuple[int, int]] = ((25, 25), (50, 50), (100, 100)),
    tau_samples: int = 2000,
    t_grid: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
    pool: Pool | None = None,
    budget: Budget | None = None,
) -> LipschitzAudit:
    """|E^1 Q_n - E^0 Q_n| / n against C nu(mu_0, mu_1).

    C = 2 (1 + sup_t nu(mu_t, mu_0)) chi_1 + 4 sup_t tau_1(mu_t), with tau_1 the
    grid supremum of E[(id, Z_{n+m})_{Z_n}] and mu_t the segment between the
    two measures.  The difference of means uses paths coupled through shared
    uniforms.
    """
    if not c.is_length:
        raise ValueError("the Lipschitz audit is stated for the word-length cocycle")
    nu = measure_distance(m0, m1)
    charge(budget, n * samples * 2, "Lipschitz audit")
    diffs = np.array(resolve(pool).map(functools.partial(_pair_record, c, m0, m1, n, seed), samples)) / n
    delta, dse = mean_se(diffs)
    delta = abs(delta)
    curve = MeasureCurve(m0, m1)
    nus, taus = [], []
    for t in t_grid:
        mt = curve.at(t)
        nus.append(measure_distance(mt, m0))
        const: DeviationConstants = deviation_constants(c, mt, grid, tau_samples, seed, (1,), pool, budget)
        taus.append(const.gromov_tau(1))
    chi1 = moment(m0, 1)
    C = 2 * (1 + max(nus)) * chi1 + 4 * max(taus)
    return LipschitzAudit(delta, dse, nu, C, chi1, max(taus), max(nus))
