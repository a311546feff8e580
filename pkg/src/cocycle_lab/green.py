"""Green metric from Monte Carlo hitting probabilities, the Green-length cocycle and entropy.

A hitting trial for target z tracks the remaining displacement w = Z_j^-1 z,
stored as a reversed syllable stack so that the update w <- X^-1 w is a push.
Two samplers share this loop:

* ``direct``: plain walks, F = P[T_z < inf] estimated by the hit fraction.
* ``tilted``: steps drawn from q(a | w) proportional to mu(a) exp(-lam |a^-1 w|)
  and weighted by mu/q.  For the simple walk on a free group with lam = log(2k-1)
  every hitting path carries the same weight F(z), so the estimator has zero
  variance there.

Both are truncated at a horizon and at an escape radius, so F is biased
downward and d_G = -log F upward.
"""

from __future__ import annotations

import functools
import hashlib
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import rng as rngmod
from .estimators import EstimateReport, mean_se, wls
from .groups import IDENTITY, GroupBackend, GroupElement, Syllable, format_element, push_syllable
from .measures import (
    DEFAULT_SUPPORT_CAP,
    ConvolutionCapError,
    DrivingMeasure,
    ExactDistribution,
    FiniteTable,
    convolution_powers,
    convolve_exact,
    entropy_of,
    measure_distance,
)
from .parallel import Budget, BudgetExceeded, Pool, resolve
from .walk import EndPoint, generate


class AsymmetricMeasureError(ValueError):
    """Green distances are only a metric for symmetric driving measures."""


class AmenableSupportError(ValueError):
    """The support generates an amenable subgroup, so entropy is zero and the Green metric degenerates."""


class EntropyBoundViolation(RuntimeError):
    """The entropy estimate exceeds the exact convolution bound by more than 3 standard errors."""


DEFAULT_ESCAPE = 16
BATCH = 64


@dataclass
class GreenEstimate:
    target: GroupElement
    horizon: int
    trials: int
    hits: int
    hit_mass: float
    f_hat: float
    f_se: float
    method: str
    horizons: tuple[int, ...] = ()
    curve: tuple[float, ...] = ()
    mean_hit_time: float = math.nan
    steps: int = 0

    @property
    def infinite(self) -> bool:
        return self.hit_mass <= 0 and not self.target.is_identity()

    @property
    def d_hat(self) -> float:
        if self.target.is_identity():
            return 0.0
        return math.inf if self.infinite else -math.log(self.f_hat)

    @property
    def d_se(self) -> float:
        if self.target.is_identity():
            return 0.0
        return math.inf if self.infinite else self.f_se / self.f_hat

    @property
    def lower_bound(self) -> float:
        """With no hits, d_G is only known to exceed about log(trials)."""
        return math.log(self.trials)

    @property
    def stability_delta(self) -> float:
        """d_hat at the full horizon minus d_hat at half of it (from the same trials)."""
        if len(self.curve) < 2 or self.curve[-2] <= 0 or self.curve[-1] <= 0:
            return math.nan
        return math.log(self.curve[-2]) - math.log(self.curve[-1])


def _require_symmetric(m: DrivingMeasure) -> None:
    if not m.is_symmetric(1e-12):
        raise AsymmetricMeasureError("Green distances need a symmetric driving measure")


def _target_seed(master_seed: int, target: GroupElement, tag: str) -> int:
    blob = f"{master_seed}:{tag}:{format_element(target)}".encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little") >> 1


def _neg_reversed(word: Sequence[Syllable]) -> tuple[Syllable, ...]:
    """Syllables to push on the reversed stack of w to obtain the reversed stack of a^-1 w."""
    return tuple((f, -e) for f, e in word)


def _stack_len(stack: list[Syllable]) -> int:
    return sum(abs(e) for _, e in stack)


def _push_all(stack: list[Syllable], word: Sequence[Syllable], orders) -> int:
    """Push a word and return the resulting change in word length."""
    k = len(word)
    tail = stack[-k:] if k else []
    before = sum(abs(e) for _, e in tail)
    del stack[len(stack) - len(tail) :]
    for f, e in word:
        push_syllable(tail, f, e, orders)
    stack.extend(tail)
    return sum(abs(e) for _, e in tail) - before


def _len_after(stack: list[Syllable], word: Sequence[Syllable], orders) -> int:
    k = len(word)
    tail = stack[-k:] if k else []
    before = sum(abs(e) for _, e in tail)
    tail = list(tail)
    for f, e in word:
        push_syllable(tail, f, e, orders)
    return sum(abs(e) for _, e in tail) - before


def _direct_trial(measure, target_syl, horizon, radius, seed, index):
    """Returns (hit time or -1, steps used)."""
    orders = measure.backend.orders
    rng = rngmod.substream(seed, index, rngmod.GREEN)
    stack = list(reversed(target_syl))
    length = _stack_len(stack)
    limit = length + radius
    finite = isinstance(measure, FiniteTable)
    pushes = [_neg_reversed(w) for w in measure._syl] if finite else None
    j = 0
    while j < horizon:
        take = min(BATCH, horizon - j)
        if finite:
            words = [pushes[i] for i in measure.sample_indices(rng, take)]
        else:
            words = [_neg_reversed(w) for w in measure.sample_syllables(rng, take)]
        for w in words:
            j += 1
            length += _push_all(stack, w, orders)
            if length == 0:
                return j, j
            if length > limit:
                return -1, j
    return -1, j


def _tilted_trial(measure, target_syl, horizon, radius, lam, seed, index):
    """Returns (hit time or -1, log weight, steps used)."""
    orders = measure.backend.orders
    rng = rngmod.substream(seed, index, rngmod.GREEN)
    stack = list(reversed(target_syl))
    length = _stack_len(stack)
    limit = length + radius
    pushes = [_neg_reversed(w) for w in measure._syl]
    probs = [float(p) for p in measure.probs]
    logp = [math.log(p) for p in probs]
    last = len(pushes) - 1
    exp = math.exp
    logw = 0.0
    j = 0
    while j < horizon:
        for u in rng.random(min(BATCH, horizon - j)):
            j += 1
            deltas = [_len_after(stack, w, orders) for w in pushes]
            low = min(deltas)
            # h(a^-1 w) relative to the best candidate, so nothing underflows
            mass = [p * exp(-lam * (d - low)) for p, d in zip(probs, deltas)]
            total = math.fsum(mass)
            target = u * total
            acc = 0.0
            i = last
            for k, v in enumerate(mass):
                acc += v
                if target < acc:
                    i = k
                    break
            # weight mu(a)/q(a) = sum_b mu(b) h(b^-1 w) / h(a^-1 w)
            logw += math.log(total) + lam * (deltas[i] - low)
            length += _push_all(stack, pushes[i], orders)
            if length == 0:
                return j, logw, j
            if length > limit:
                return -1, 0.0, j
    return -1, 0.0, j


def _horizon_ladder(N: int) -> tuple[int, ...]:
    return tuple(sorted({max(1, N // 8), max(1, N // 4), max(1, N // 2), N}))


def green_distance(
    z: GroupElement,
    m: DrivingMeasure,
    N: int,
    M: int,
    seed: int,
    method: str = "direct",
    lam: float | None = None,
    radius: int = DEFAULT_ESCAPE,
    pool: Pool | None = None,
) -> GreenEstimate:
    """Estimate F(z) = P[the walk ever visits z] and d_G(id, z) = -log F(z)."""
    _require_symmetric(m)
    if N < 1 or M < 1:
        raise ValueError("horizon and trial count must be positive")
    ladder = _horizon_ladder(N)
    if z.is_identity():
        return GreenEstimate(z, N, M, M, float(M), 1.0, 0.0, method, ladder, (1.0,) * len(ladder), 0.0, 0)
    tseed = _target_seed(seed, z, method)
    pool = resolve(pool)
    if method == "direct":
        recs = pool.map(functools.partial(_direct_trial, m, z.syllables, N, radius, tseed), M)
        times = np.array([r[0] for r in recs])
        weights = (times > 0).astype(float)
        steps = int(sum(r[1] for r in recs))
    elif method == "tilted":
        if not isinstance(m, FiniteTable):
            raise ValueError("the tilted sampler needs a finite table")
        if lam is None:
            raise ValueError("the tilted sampler needs a tilt rate")
        recs = pool.map(functools.partial(_tilted_trial, m, z.syllables, N, radius, lam, tseed), M)
        times = np.array([r[0] for r in recs])
        weights = np.where(times > 0, np.exp([r[1] for r in recs]), 0.0)
        steps = int(sum(r[2] for r in recs))
    else:
        raise ValueError(f"unknown Green sampler {method!r}")
    hit = times > 0
    f_hat, f_se = mean_se(weights)
    curve = tuple(float(weights[hit & (times <= h)].sum() / M) for h in ladder)
    mean_t = float(np.average(times[hit], weights=weights[hit])) if hit.any() else math.nan
    return GreenEstimate(
        z, N, M, int(hit.sum()), float(weights.sum()), f_hat, f_se, method, ladder, curve, mean_t, steps
    )


def pilot_rate(m: FiniteTable, N: int, M: int, seed: int, pool: Pool | None = None) -> float:
    """Tilt rate for the tilted sampler: direct-estimate d_G per unit length over the support."""
    rates, weights = [], []
    for g, p in m.items():
        if g.is_identity():
            continue
        est = green_distance(g, m, N, M, seed, "direct", pool=pool)
        if not est.infinite:
            rates.append(est.d_hat / g.length)
            weights.append(p)
    if not rates:
        raise ValueError("pilot run produced no hits")
    return float(np.average(rates, weights=weights))


# -- memoized table and the Green-length cocycle -------------------------------------------------


@dataclass
class GreenTable:
    """Memoized d_G estimates keyed by normal-form word, with optional disk persistence.

    The key written to disk folds the sampler settings into the measure
    fingerprint, since estimates from different samplers are not interchangeable.
    """

    measure: DrivingMeasure
    N: int
    M: int
    seed: int
    method: str = "direct"
    lam: float | None = None
    radius: int = DEFAULT_ESCAPE
    budget: Budget | None = None
    entries: dict[GroupElement, GreenEstimate] = field(default_factory=dict)

    def __post_init__(self):
        _require_symmetric(self.measure)

    @property
    def key(self) -> str:
        tag = self.measure.fingerprint()
        if self.method == "tilted":
            tag += f"/tilt={self.lam!r}"
        return f"{tag}/r={self.radius}/s={self.seed}"

    def _estimate(self, z: GroupElement, pool: Pool | None) -> GreenEstimate:
        return green_distance(z, self.measure, self.N, self.M, self.seed, self.method, self.lam, self.radius, pool)

    def _charge(self, est: GreenEstimate) -> None:
        if self.budget is not None:
            self.budget.charge(est.steps, f"Green estimate for {est.target}")

    def get(self, z: GroupElement) -> GreenEstimate:
        est = self.entries.get(z)
        if est is None:
            est = self._estimate(z, None)
            self._charge(est)
            self.entries[z] = est
        return est

    def d(self, z: GroupElement) -> float:
        return self.get(z).d_hat

    def prefill(self, targets: Iterable[GroupElement], pool: Pool | None = None) -> None:
        """Estimate every missing target; work is spread across targets, results merged in sorted order."""
        missing = sorted({z for z in targets if z not in self.entries}, key=lambda g: (g.length, format_element(g)))
        if not missing:
            return
        ests = resolve(pool).map(functools.partial(_estimate_target, self, missing), range(len(missing)))
        for z, est in zip(missing, ests):
            self._charge(est)
            self.entries[z] = est

    def save(self, path: str | os.PathLike) -> None:
        """Merge this table into the cache file; lines for other keys or settings are kept."""
        mine = {}
        for z, e in self.entries.items():
            mine[(self.key, format_element(z), e.horizon, e.trials)] = e.hit_mass
        kept = []
        if os.path.exists(path):
            with open(path) as fh:
                for line in fh:
                    parts = line.split()
                    if len(parts) == 5 and (parts[0], parts[1], int(parts[2]), int(parts[3])) not in mine:
                        kept.append(line.rstrip("\n"))
        lines = kept + [f"{k} {w} {N} {M} {mass!r}" for (k, w, N, M), mass in mine.items()]
        lines.sort()
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))

    def load(self, path: str | os.PathLike) -> int:
        """Read matching cache lines; returns how many entries were added."""
        if not os.path.exists(path):
            return 0
        added = 0
        with open(path) as fh:
            for line in fh:
                parts = line.split()
                if len(parts) != 5 or parts[0] != self.key:
                    continue
                z = self.measure.backend.element(parts[1])
                N, M, mass = int(parts[2]), int(parts[3]), float(parts[4])
                if N != self.N or M != self.M or z in self.entries:
                    continue
                f = mass / M
                # direct trials are Bernoulli, so the standard error follows from the hit count
                se = math.sqrt(f * (1 - f) / (M - 1)) if self.method == "direct" and M > 1 else math.nan
                self.entries[z] = GreenEstimate(z, N, M, int(mass) if self.method == "direct" else -1, mass, f, se, self.method)
                added += 1
        return added


def _estimate_target(table: GreenTable, targets, i):
    return table._estimate(targets[i], None)


class GreenLength(EndPoint):
    """Q_n = estimated d_G(id, Z_n), looked up in (and extending) a GreenTable."""

    kind = "green_length"

    def __init__(self, table: GreenTable, name: str = "green_length"):
        self.table = table
        self.name = name
        self.q = table.d


def green_cocycle(table: GreenTable) -> GreenLength:
    return GreenLength(table)


# -- entropy ----------------------------------------------------------------------------------------


def generates_nonamenable(m: DrivingMeasure) -> bool:
    """Structural test on the support: False when it sits in an amenable subgroup.

    Recognized amenable cases: amenable backends, supports whose elements all
    commute, and supports inside two factors of order 2 (infinite dihedral).
    """
    b = m.backend
    if b.is_amenable:
        return False
    if not m.is_finite:
        return len(b.orders) >= 2 and not (len(b.orders) == 2 and set(b.orders) == {2})
    support = [g for g, _ in m.to_table().items() if not g.is_identity()]
    if not support:
        return False
    if all(b.multiply(g, h) == b.multiply(h, g) for g in support for h in support):
        return False
    factors = {f for g in support for f, _ in g.syllables}
    if len(factors) == 2 and all(b.orders[f] == 2 for f in factors):
        return False
    return True


def exact_entropy_bounds(m: DrivingMeasure, n_max: int, cap: int = DEFAULT_SUPPORT_CAP) -> list[tuple[int, float]]:
    """(n, H(mu^n)/n) for 1 <= n <= n_max, stopping early if the support cap is hit."""
    one = ExactDistribution.from_measure(m)
    current = one
    out = [(1, entropy_of(one))]
    for n in range(2, n_max + 1):
        try:
            current = convolve_exact(current, one, cap)
        except ConvolutionCapError:
            break
        out.append((n, entropy_of(current) / n))
    return out


def _endpoint(measure, n, seed, offset, index):
    return generate(measure, n, offset + index, seed).position(n)


@dataclass
class EntropyResult:
    report: EstimateReport
    means: list[tuple[int, float, float]]
    exact_bounds: list[tuple[int, float]]
    bound: float
    table: GreenTable


def entropy_estimate(
    m: FiniteTable,
    n_grid: Sequence[int],
    samples: int,
    seed: int,
    N: int = 200,
    M: int = 64,
    method: str = "tilted",
    lam: float | None = None,
    pilot_trials: int = 4000,
    exact_n: int = 6,
    pool: Pool | None = None,
    budget: Budget | None = None,
) -> EntropyResult:
    """Slope of E d_G(id, Z_n) in n, fitted by weighted least squares, with the exact-convolution bound."""
    _require_symmetric(m)
    if not generates_nonamenable(m):
        raise AmenableSupportError("support generates an amenable subgroup; entropy is zero")
    pool = resolve(pool)
    if method == "tilted" and lam is None:
        lam = pilot_rate(m, N, pilot_trials, seed + 1, pool)
    table = GreenTable(m, N, M, seed, method, lam, budget=budget)
    endpoints = []
    for k, n in enumerate(n_grid):
        if budget is not None:
            budget.charge(n * samples, "entropy walks")
        endpoints.append(pool.map(functools.partial(_endpoint, m, n, seed, k * samples), samples))
    table.prefill([z for zs in endpoints for z in zs], pool)
    means = []
    for n, zs in zip(n_grid, endpoints):
        vals = np.array([table.d(z) for z in zs])
        if not np.all(np.isfinite(vals)):
            raise BudgetExceeded("some Green estimates have no hits; raise the trial count")
        mu, se = mean_se(vals)
        means.append((n, mu, se))
    x = np.array([n for n, _, _ in means], float)
    y = np.array([mu for _, mu, _ in means])
    se = np.array([s for _, _, s in means])
    fit = wls(x, y, 1 / se**2)
    bounds = exact_entropy_bounds(m, exact_n)
    bound = min(v for _, v in bounds)
    report = EstimateReport(fit.slope, fit.slope_se, samples, tuple(n_grid), f"entropy/{method}", extras={"lam": lam})
    if fit.slope > bound + 3 * fit.slope_se:
        raise EntropyBoundViolation(f"entropy estimate {fit.slope:.4f} exceeds exact bound {bound:.4f}")
    return EntropyResult(report, means, bounds, bound, table)


# -- diagnostics ------------------------------------------------------------------------------------


@dataclass
class SpectralDiagnostic:
    returns: list[tuple[int, float]]
    ratio: float
    root: float


def spectral_radius_diagnostic(m: DrivingMeasure, k_max: int, cap: int = DEFAULT_SUPPORT_CAP) -> SpectralDiagnostic:
    """Return probabilities mu^{2k}(id) from exact convolution and their geometric decay.

    ``ratio`` is sqrt(mu^{2k}(id)/mu^{2k-2}(id)) at the largest k, ``root`` is
    mu^{2k}(id)^{1/2k}; both tend to the spectral radius.
    """
    powers = convolution_powers(m, 2 * k_max, cap)
    returns = [(2 * k, powers[2 * k][IDENTITY]) for k in range(1, k_max + 1)]
    (_, a), (n, b) = returns[-2], returns[-1]
    return SpectralDiagnostic(returns, math.sqrt(b / a), b ** (1 / n))


@dataclass
class FluctuationRow:
    target: GroupElement
    d0: float
    d1: float
    se: float
    nu: float

    @property
    def ratio(self) -> float:
        """|d1 - d0| / (nu |z|): empirical surrogate for the fluctuation constant."""
        return abs(self.d1 - self.d0) / (self.nu * self.target.length)


def green_fluctuation_audit(
    m0: FiniteTable, m1: FiniteTable, targets: Sequence[GroupElement], N: int, M: int, seed: int, pool: Pool | None = None
) -> list[FluctuationRow]:
    nu = measure_distance(m0, m1)
    rows = []
    for z in targets:
        e0 = green_distance(z, m0, N, M, seed, pool=pool)
        e1 = green_distance(z, m1, N, M, seed, pool=pool)
        rows.append(FluctuationRow(z, e0.d_hat, e1.d_hat, math.hypot(e0.d_se, e1.d_se), nu))
    return rows


def conditional_hitting_times(
    m: DrivingMeasure, targets: Sequence[GroupElement], N: int, M: int, seed: int, pool: Pool | None = None
) -> list[tuple[GroupElement, float]]:
    """E[T_z | T_z < horizon] per target, to compare against a multiple of |z|."""
    return [(z, green_distance(z, m, N, M, seed, pool=pool).mean_hit_time) for z in targets]
