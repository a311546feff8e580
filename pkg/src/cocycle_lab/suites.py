"""Built-in experiment suites.

A suite turns validated parameters into report rows, pass/fail criteria and
plot series.  Suites never spawn workers or pick seeds themselves; both come
in through :class:`Context`.
"""

from __future__ import annotations

import difflib
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import estimators as est
from . import green as gr
from . import rng as rngmod
from . import sensitivity as sens
from .config import ConfigError, ExperimentConfig
from .groups import GroupBackend
from .measures import DrivingMeasure, FiniteTable, MeasureCurve
from .parallel import Budget, BudgetExceeded, Pool
from .walk import LengthCocycle, brooks_cocycle, defect, dyadic_sweep, generate


@dataclass
class Row:
    estimator: str
    cocycle: str
    n: int | str
    statistic: str
    value: float
    stderr: float = math.nan
    samples: int = 0


@dataclass
class Criterion:
    name: str
    value: float
    threshold: float
    passed: bool


@dataclass
class Series:
    figure: str
    label: str
    x: list[float]
    y: list[float]
    xlabel: str = "n"
    ylabel: str = ""
    logy: bool = False


@dataclass
class SuiteResult:
    rows: list[Row] = field(default_factory=list)
    criteria: list[Criterion] = field(default_factory=list)
    series: list[Series] = field(default_factory=list)
    incomplete: bool = False
    notes: list[str] = field(default_factory=list)

    def row(self, *args, **kw) -> None:
        self.rows.append(Row(*args, **kw))

    def check(self, name: str, value: float, threshold: float, passed: bool) -> None:
        self.criteria.append(Criterion(name, float(value), float(threshold), bool(passed)))

    @property
    def passed(self) -> bool:
        return not self.incomplete and all(c.passed for c in self.criteria)


@dataclass
class Context:
    config: ExperimentConfig
    seed: int
    pool: Pool
    budget: Budget

    def measure(self, name: str) -> DrivingMeasure:
        return self.config.measure(name)


@dataclass(frozen=True)
class Suite:
    name: str
    summary: str
    doc: str
    run: Callable[[Context, object, SuiteResult], None]
    primary: Callable[[object], str]


# -- closed forms used as oracles on regular trees ---------------------------------------------------


def tree_degree(m: DrivingMeasure) -> int | None:
    """Degree of the Cayley tree when ``m`` is the simple walk on a free product of Z's and Z/2's."""
    b: GroupBackend = m.backend
    if not isinstance(m, FiniteTable) or m.label != "srw":
        return None
    if any(o not in (0, 2) for o in b.orders):
        return None
    return len(b.generators())


def tree_oracles(m: DrivingMeasure) -> dict[str, float]:
    """Speed (D-2)/D, Green rate log(D-1) and entropy (D-2)/D log(D-1) of the simple walk on a D-regular tree."""
    D = tree_degree(m)
    if D is None or D < 3:
        return {"speed": 0.0} if D == 2 else {}
    return {"speed": (D - 2) / D, "green_rate": math.log(D - 1), "entropy": (D - 2) / D * math.log(D - 1)}


# -- deviation ---------------------------------------------------------------------------------------


def _run_deviation(ctx: Context, p, res: SuiteResult) -> None:
    L = LengthCocycle()
    grid = [(a, b) for a in p.grid for b in p.grid]
    for name in p.measures:
        m = ctx.measure(name)
        tail = est.deviation_tail(L, m, grid, p.thresholds, p.samples, ctx.seed, ctx.pool, ctx.budget)
        for pt in tail.points:
            res.row("deviation_tail", f"length@{name}", f"{pt.n}+{pt.m}", "rate", pt.rate, math.nan, p.samples)
            res.series.append(
                Series(f"tail_{name}", f"n={pt.n},m={pt.m}", list(tail.thresholds), list(pt.survival), "c", "P[(id,Z_n+m)_Zn >= c]", True)
            )
        res.row("deviation_tail", f"length@{name}", "worst", "rate", tail.rate, math.nan, p.samples)
        res.row("deviation_tail", f"length@{name}", "worst", "tau0", tail.tau0, math.nan, p.samples)
        rates = tail.rates
        res.check(f"tail_rate_min_positive[{name}]", float(np.nanmin(rates)) if np.any(np.isfinite(rates)) else math.nan, 0.0, bool(np.all(rates > 0)))
        res.check(f"tail_rate_variation_below[{name}]", tail.variation, p.max_variation, tail.variation < p.max_variation)

    name = p.measures[0]
    m = ctx.measure(name)
    tau_grid = [(a, b) for a in p.tau_grid for b in p.tau_grid]
    consts = est.deviation_constants(L, m, tau_grid, p.tau_samples, ctx.seed, (1, 2), ctx.pool, ctx.budget)
    for q in (1, 2):
        res.row("deviation_constants", f"length@{name}", "grid", f"tau{q}", consts.tau[q], consts.tau_se[q], p.tau_samples)
        res.row("deviation_constants", f"length@{name}", 1, f"chi{q}", consts.chi[q], consts.chi_se[q], p.tau_samples)

    var = est.estimate_variance_curve(L, m, p.variance_grid, p.variance_samples, ctx.seed, ctx.pool, consts, ctx.budget)
    for pt in var.points:
        res.row("variance_curve", f"length@{name}", pt.n, "var_over_n", pt.value, pt.stderr, p.variance_samples)
    res.series.append(Series("variance", name, [pt.n for pt in var.points], [pt.value for pt in var.points], "n", "Var[Q_n]/n"))
    worst = max(pt.value - 5 * pt.stderr for pt in var.points)
    res.row("variance_curve", f"length@{name}", "bound", "4chi2+16tau2", var.bound)
    res.check(f"variance_upper_bound[{name}]", worst, var.bound, not var.violations())

    es = est.efron_stein_check(L, m, p.efron_stein_n, p.efron_stein_samples, ctx.seed, ctx.pool, consts, ctx.budget)
    _efron_stein_rows(res, es, f"length@{name}", p.efron_stein_samples)
    res.check(f"efron_stein_inequality[{name}]", (es.lhs - es.rhs) / es.combined_se, 3.0, es.inequality_holds())
    res.check(f"efron_stein_influence_bound[{name}]", float(es.influence.max()), es.influence_bound, not es.influence_violations())

    add = p.additive.build(m.backend)
    es_add = est.efron_stein_check(add, m, p.efron_stein_n, p.efron_stein_samples, ctx.seed, ctx.pool, None, ctx.budget)
    _efron_stein_rows(res, es_add, f"{add.name}@{name}", p.efron_stein_samples)
    res.check(f"efron_stein_additive_equality[{name}]", abs(es_add.lhs - es_add.rhs) / es_add.combined_se, 3.0, es_add.equality_holds())

    mom = est.higher_moment_ratio(L, m, p.moment_p, p.moment_grid, p.moment_samples, ctx.seed, ctx.pool, ctx.budget)
    for pt in mom.points:
        res.row("higher_moment_ratio", f"length@{name}", pt.n, f"p={p.moment_p:g}", pt.value, pt.stderr, p.moment_samples)
    res.row("higher_moment_ratio", f"length@{name}", "trend", "slope_vs_log_n", mom.trend.slope, mom.trend.slope_se, p.moment_samples)
    res.series.append(Series("higher_moment", name, [pt.n for pt in mom.points], [pt.value for pt in mom.points], "n", f"E|Q_n - EQ_n|^{p.moment_p:g} / n^{p.moment_p / 2:g}"))
    res.check(f"higher_moment_trend_pvalue_above[{name}]", mom.p_value, 0.01, mom.passes())


def _efron_stein_rows(res: SuiteResult, es, label: str, samples: int) -> None:
    res.row("efron_stein", label, es.n, "lhs_variance", es.lhs, es.lhs_se, samples)
    res.row("efron_stein", label, es.n, "rhs_half_sum", es.rhs, es.rhs_se, samples)
    res.row("efron_stein", label, es.n, "max_influence", float(es.influence.max()), float(es.influence_se[int(np.argmax(es.influence))]), samples)


# -- CLT and speed -------------------------------------------------------------------------------------


def _run_clt(ctx: Context, p, res: SuiteResult) -> None:
    L = LengthCocycle()
    m = ctx.measure(p.measure)
    grid = [(a, b) for a in p.bracket_grid for b in p.bracket_grid]
    consts = est.deviation_constants(L, m, grid, p.bracket_samples, ctx.seed, (1,), ctx.pool, ctx.budget)
    speed = est.estimate_speed(L, m, p.speed_n, p.speed_samples, ctx.seed, ctx.pool, consts, ctx.budget)
    res.row("estimate_speed", "length", p.speed_n, "speed", speed.estimate, speed.stderr, p.speed_samples)
    lo, hi = speed.extras["bracket"]
    res.row("estimate_speed", "length", p.speed_n, "bracket_low", lo)
    res.row("estimate_speed", "length", p.speed_n, "bracket_high", hi)
    expected = p.speed_expected if p.speed_expected is not None else tree_oracles(m).get("speed")
    if expected is not None:
        err = abs(speed.estimate - expected)
        res.check("speed_matches_oracle", err, p.speed_tolerance, err <= p.speed_tolerance)

    clt = est.clt_suite(L, m, p.n_grid, p.samples, ctx.seed, ctx.pool, budget=ctx.budget)
    _clt_rows(res, clt, "length", p.samples)
    res.series.append(Series("ks", p.measure, [pt.n for pt in clt.points], [pt.ks for pt in clt.points], "n", "KS distance"))
    last = clt.points[-1]
    res.series.append(Series("qq", f"{p.measure} n={last.n}", list(last.qq_theoretical), list(last.qq_empirical), "normal quantile", "empirical quantile"))
    res.check(f"ks_at_n{last.n}_below", last.ks, p.ks_threshold, last.ks <= p.ks_threshold)
    res.check("ks_decreasing_along_grid", float(clt.ks_decreasing()), 1.0, clt.ks_decreasing())
    z = last.sigma2 / last.sigma2_se if last.sigma2_se > 0 else 0.0
    res.check("variance_positive_in_se", z, 5.0, z > 5.0)

    if p.control is not None:
        ctl = est.clt_suite(L, ctx.measure(p.control), p.n_grid, p.samples, ctx.seed, ctx.pool, folded_oracle=True, budget=ctx.budget)
        _clt_rows(res, ctl, f"length@{p.control}", p.samples)
        res.series.append(Series("ks", f"{p.control} (normal)", [pt.n for pt in ctl.points], [pt.ks for pt in ctl.points]))
        res.series.append(Series("ks", f"{p.control} (folded normal)", [pt.n for pt in ctl.points], [pt.ks_folded for pt in ctl.points]))
        c = ctl.points[-1]
        flagged = c.ks > p.ks_threshold and c.ks_folded < c.ks
        res.check("control_flagged_non_gaussian", c.ks, p.ks_threshold, flagged)


def _clt_rows(res: SuiteResult, clt, label: str, samples: int) -> None:
    for pt in clt.points:
        res.row("clt_suite", label, pt.n, "ks", pt.ks, math.nan, samples)
        res.row("clt_suite", label, pt.n, "sigma2", pt.sigma2, pt.sigma2_se, samples)
        res.row("clt_suite", label, pt.n, "skewness", pt.skewness, math.nan, samples)
        res.row("clt_suite", label, pt.n, "excess_kurtosis", pt.excess_kurtosis, math.nan, samples)
        res.row("clt_suite", label, pt.n, "degenerate", float(pt.degenerate), math.nan, samples)
        if pt.ks_folded is not None:
            res.row("clt_suite", label, pt.n, "ks_folded_normal", pt.ks_folded, math.nan, samples)


# -- Green metric and entropy -----------------------------------------------------------------------------


def _run_green(ctx: Context, p, res: SuiteResult) -> None:
    m = ctx.measure(p.measure)
    rate = tree_oracles(m).get("green_rate")
    b = m.backend
    xs, ys = [], []
    per_unit = []
    for tgt in p.targets:
        z = b.element(tgt.word)
        table = gr.GreenTable(m, p.horizon, tgt.trials, ctx.seed, "direct", radius=p.radius, budget=ctx.budget)
        if p.cache:
            table.load(p.cache)
        table.prefill([z], ctx.pool)
        if p.cache:
            table.save(p.cache)
        e = table.entries[z]
        label = f"green@{p.measure}"
        res.row("green_distance", label, tgt.word, "hits", float(e.hit_mass), math.nan, tgt.trials)
        res.row("green_distance", label, tgt.word, "F", e.f_hat, e.f_se, tgt.trials)
        if e.infinite:
            res.row("green_distance", label, tgt.word, "d_lower_bound", e.lower_bound, math.nan, tgt.trials)
            res.check(f"green_rate[{tgt.word}]", math.inf, rate or math.nan, False)
            continue
        res.row("green_distance", label, tgt.word, "d", e.d_hat, e.d_se, tgt.trials)
        res.row("green_distance", label, tgt.word, "horizon_delta", e.stability_delta, math.nan, tgt.trials)
        res.row("green_distance", label, tgt.word, "mean_hit_time", e.mean_hit_time, math.nan, tgt.trials)
        unit = e.d_hat / z.length
        per_unit.append(unit)
        xs.append(z.length)
        ys.append(e.d_hat)
        if rate is not None:
            rel = abs(unit - rate) / rate
            res.check(f"green_rate[{tgt.word}]", rel, p.tolerance, rel <= p.tolerance)
    res.series.append(Series("green", p.measure, xs, ys, "|z|", "estimated d_G(id, z)"))
    if per_unit:
        res.row("green_distance", f"green@{p.measure}", "all", "min_d_per_length", min(per_unit))
        res.row("green_distance", f"green@{p.measure}", "all", "max_d_per_length", max(per_unit))
    diag = gr.spectral_radius_diagnostic(m, p.spectral_k)
    for n, r in diag.returns:
        res.row("spectral_radius", "exact", n, "return_probability", r)
    res.row("spectral_radius", "exact", 2 * p.spectral_k, "ratio", diag.ratio)
    res.row("spectral_radius", "exact", 2 * p.spectral_k, "root", diag.root)
    res.series.append(Series("returns", p.measure, [n for n, _ in diag.returns], [r for _, r in diag.returns], "n", "mu^n(id)", True))
    res.check("spectral_ratio_below_one", diag.ratio, 1.0, diag.ratio < 1.0)


def _run_entropy(ctx: Context, p, res: SuiteResult) -> None:
    m = ctx.measure(p.measure)
    label = f"green_length@{p.measure}"
    try:
        out = gr.entropy_estimate(
            m, p.n_grid, p.samples, ctx.seed, p.horizon, p.trials, "tilted", None, p.pilot_trials, p.exact_n, ctx.pool, ctx.budget
        )
    except gr.EntropyBoundViolation as exc:
        res.notes.append(str(exc))
        res.check("entropy_below_exact_bound", math.nan, math.nan, False)
        return
    r = out.report
    for n, mu, se in out.means:
        res.row("entropy_estimate", label, n, "mean_green_distance", mu, se, p.samples)
    res.row("entropy_estimate", label, "slope", "entropy", r.estimate, r.stderr, p.samples)
    res.row("entropy_estimate", label, "pilot", "tilt_rate", r.extras["lam"])
    for n, h in out.exact_bounds:
        res.row("exact_entropy", "convolution", n, "H_over_n", h)
    res.series.append(Series("entropy", "E d_G(id, Z_n)", [n for n, _, _ in out.means], [mu for _, mu, _ in out.means], "n", "mean Green distance"))
    res.series.append(Series("entropy_bound", "H(mu^n)/n", [n for n, _ in out.exact_bounds], [h for _, h in out.exact_bounds], "n", "nats per step"))
    res.check("entropy_below_exact_bound", r.estimate - out.bound, 3 * r.stderr, r.estimate <= out.bound + 3 * r.stderr)
    target = tree_oracles(m).get("entropy")
    if target is not None:
        rel = abs(r.estimate - target) / target
        res.check("entropy_matches_oracle", rel, p.tolerance, rel <= p.tolerance)


# -- sensitivity -----------------------------------------------------------------------------------------


def _finite(ctx: Context, name: str) -> FiniteTable:
    m = ctx.measure(name)
    if not isinstance(m, FiniteTable):
        raise ConfigError(f"measure {name!r} must be a finite table here")
    return m


def _run_sensitivity(ctx: Context, p, res: SuiteResult) -> None:
    L = LengthCocycle()
    m0, mt = _finite(ctx, p.girsanov.base), _finite(ctx, p.girsanov.other)
    F = sens.EndLength()
    worst = 0.0
    for n in range(1, p.identity_n + 1):
        ident = sens.girsanov_identity(F, m0, mt, n)
        worst = max(worst, ident.difference)
        res.row("girsanov_identity", "length", n, "abs_difference", ident.difference)
    res.check("girsanov_exact_identity", worst, 1e-12, worst <= 1e-12)
    curve = MeasureCurve(m0, mt)
    coef = sens.expectation_polynomial(F, curve, p.identity_n)
    poly_err = 0.0
    for t in (0.0, 0.3, 0.7, 1.0):
        exact = sens.exact_expectation(F, curve.at(t), p.identity_n)
        poly_err = max(poly_err, abs(float(np.polynomial.polynomial.polyval(t, coef)) - exact))
    res.row("girsanov_identity", "length", p.identity_n, "polynomial_max_error", poly_err)
    res.check("expectation_polynomial_in_t", poly_err, 1e-12, poly_err <= 1e-12)

    g = sens.girsanov_estimate(F, m0, mt, p.girsanov_n, p.girsanov_samples, ctx.seed, ctx.pool, ctx.budget)
    label = f"length@{p.girsanov.base}->{p.girsanov.other}"
    res.row("girsanov_estimate", label, p.girsanov_n, "reweighted", g.estimate, g.stderr, p.girsanov_samples)
    res.row("girsanov_estimate", label, p.girsanov_n, "direct", g.direct, g.direct_se, p.girsanov_samples)
    res.row("girsanov_estimate", label, p.girsanov_n, "weight_mean", g.weight_mean, g.weight_se, p.girsanov_samples)
    res.row("girsanov_estimate", label, p.girsanov_n, "ess", g.ess, math.nan, p.girsanov_samples)
    res.check("girsanov_reweighted_vs_direct", abs(g.estimate - g.direct) / g.combined_se, 3.0, g.agrees())
    res.check("girsanov_weight_mean_one", abs(g.weight_mean - 1) / g.weight_se, 4.0, g.weights_normalized())

    for cs in p.curves:
        c0, c1 = _finite(ctx, cs.base), _finite(ctx, cs.end)
        curve = MeasureCurve(c0, c1)
        if cs.nu is not None:
            try:
                curve.check_direction_table({c0.backend.element(k): v for k, v in cs.nu.items()}, 1e-9)
            except ValueError as exc:
                raise sens.MalformedCurveError(str(exc)) from None
        d = sens.speed_derivative(curve, L, p.n_grid, p.samples, ctx.seed, tuple(p.ts), ctx.pool, ctx.budget)
        tag = f"{cs.base}->{cs.end}"
        for pt in d.points:
            res.row("speed_derivative", f"length@{tag}", pt.n, "covariance", pt.covariance, pt.covariance_se, p.samples)
            res.row("speed_derivative", f"length@{tag}", pt.n, "richardson_difference", pt.finite_difference, pt.finite_difference_se, p.samples)
        res.row("speed_derivative", f"length@{tag}", "limit", "stability_delta", d.stability_delta)
        res.series.append(Series(f"derivative_{tag}", "covariance", [pt.n for pt in d.points], [pt.covariance for pt in d.points], "n", "d/dt E Q_n / n"))
        res.series.append(Series(f"derivative_{tag}", "finite difference", [pt.n for pt in d.points], [pt.finite_difference for pt in d.points], "n", "d/dt E Q_n / n"))
        lim = d.limit
        if cs.expect_zero:
            zc = abs(lim.covariance) / lim.covariance_se
            zf = abs(lim.finite_difference) / lim.finite_difference_se
            res.check(f"derivative_zero_covariance[{tag}]", zc, 3.0, zc <= 3.0)
            res.check(f"derivative_zero_difference[{tag}]", zf, 3.0, zf <= 3.0)
        else:
            zz = abs(lim.covariance - lim.finite_difference) / lim.combined_se
            res.check(f"derivative_agreement[{tag}]", zz, 3.0, d.agrees())
        res.check(f"derivative_sign_consistent[{tag}]", float(d.sign_consistent()), 1.0, d.sign_consistent())

    for pair in p.lipschitz:
        a, b = _finite(ctx, pair.base), _finite(ctx, pair.other)
        au = sens.lipschitz_audit(a, b, L, p.lipschitz_n, p.lipschitz_samples, ctx.seed, tau_samples=p.tau_samples, pool=ctx.pool, budget=ctx.budget)
        tag = f"length@{pair.base}~{pair.other}"
        res.row("lipschitz_audit", tag, p.lipschitz_n, "delta_speed", au.delta, au.delta_se, p.lipschitz_samples)
        res.row("lipschitz_audit", tag, p.lipschitz_n, "nu", au.nu)
        res.row("lipschitz_audit", tag, p.lipschitz_n, "constant", au.constant)
        res.row("lipschitz_audit", tag, p.lipschitz_n, "slack", au.slack)
        res.check(f"lipschitz_ratio_below_constant[{pair.base}~{pair.other}]", au.ratio, au.constant, au.ratio < au.constant and au.passes())


# -- exact checks -------------------------------------------------------------------------------------------


def _run_decompose(ctx: Context, p, res: SuiteResult) -> None:
    m = ctx.measure(p.measure)
    b = m.backend
    for cs in p.cocycles:
        c = cs.build(b)
        worst = 0.0
        curve = []
        for i in range(p.trajectories):
            t = generate(m, p.n_max, i, ctx.seed)
            for n in range(2, p.n_max + 1):
                w = 0.0
                for d in dyadic_sweep(c, t, n):
                    w = max(w, max(d.residual, d.residual_full) / (1 + abs(d.target)))
                worst = max(worst, w)
                if i == 0:
                    curve.append(w)
        res.row("dyadic_decompose", c.name, f"2..{p.n_max}", "max_relative_residual", worst, math.nan, p.trajectories)
        res.series.append(Series("dyadic_residual", c.name, list(range(2, p.n_max + 1)), curve, "n", "max residual over M"))
        res.check(f"dyadic_reconstruction[{c.name}]", worst, p.tolerance, worst <= p.tolerance)

    # defect identities on sampled (trajectory, n, m)
    L = LengthCocycle()
    additive = next((cs.build(b) for cs in p.cocycles if cs.kind == "additive"), None)
    horizon = p.gromov_horizon
    paths = [generate(m, horizon, 10_000 + i, ctx.seed) for i in range(p.gromov_trajectories)]
    positions = [[t.position(j) for j in range(horizon + 1)] for t in paths]
    pick = rngmod.substream(ctx.seed, 0, rngmod.PILOT)
    which = pick.integers(0, len(paths), p.gromov_samples)
    ns = pick.integers(0, horizon + 1, p.gromov_samples)
    mismatches = 0
    add_worst = 0.0
    for i, n in zip(which, ns):
        mm = int(pick.integers(0, horizon - n + 1))
        t, pos = paths[i], positions[i]
        psi = defect(L, t, int(n), mm).value
        g2 = b.gromov_product2(pos[0], pos[n + mm], pos[n])
        if psi != -g2:
            mismatches += 1
        if additive is not None:
            add_worst = max(add_worst, abs(defect(additive, t, int(n), mm).value))
    res.row("defect", "length", "sampled", "gromov_mismatches", mismatches, math.nan, p.gromov_samples)
    res.check("length_defect_equals_minus_twice_gromov", mismatches, 0, mismatches == 0)
    if additive is not None:
        res.row("defect", additive.name, "sampled", "max_abs_defect", add_worst, math.nan, p.gromov_samples)
        res.check("additive_defect_zero", add_worst, 0.0, add_worst == 0.0)

    qm = brooks_cocycle()
    sup = 0.0
    for i, n in zip(which[: p.quasimorphism_samples], ns[: p.quasimorphism_samples]):
        mm = (int(n) * 7919) % (horizon - int(n) + 1)
        sup = max(sup, abs(defect(qm, paths[i], int(n), mm).value))
    res.row("defect", qm.name, "sampled", "sup_abs_defect", sup, math.nan, min(p.quasimorphism_samples, p.gromov_samples))


def _run_lazy(ctx: Context, p, res: SuiteResult) -> None:
    m = ctx.measure(p.measure)
    worst_tv = worst_bin = worst_ind = 0.0
    for n in range(1, p.n_max + 1):
        chk = est.lazy_decomposition_check(m, n)
        for k, tv in sorted(chk.tv.items()):
            res.row("lazy_decomposition", f"lazy@{p.measure}", n, f"tv_k={k}", tv)
        res.row("lazy_decomposition", f"lazy@{p.measure}", n, "binomial_error", chk.binomial_error)
        res.row("lazy_decomposition", f"lazy@{p.measure}", n, "independence_error", chk.independence_error)
        worst_tv = max(worst_tv, chk.max_tv)
        worst_bin = max(worst_bin, chk.binomial_error)
        worst_ind = max(worst_ind, chk.independence_error)
        if n == p.n_max:
            res.series.append(Series("lazy_tv", f"n={n}", sorted(chk.tv), [chk.tv[k] for k in sorted(chk.tv)], "k", "TV distance"))
    res.check("conditional_law_tv", worst_tv, p.tolerance, worst_tv <= p.tolerance)
    res.check("idle_count_binomial", worst_bin, p.tolerance, worst_bin <= p.tolerance)
    res.check("idle_path_independence", worst_ind, p.tolerance, worst_ind <= p.tolerance)


def _run_progress(ctx: Context, p, res: SuiteResult) -> None:
    m = ctx.measure(p.measure)
    pr = est.linear_progress_tail(m, p.C, p.n_grid, p.samples, ctx.seed, ctx.pool, ctx.budget)
    _progress_rows(res, pr, p.measure)
    if pr.fit is None:
        res.check("progress_slope_negative", math.nan, 0.0, False)
        res.check("progress_fit_r2", math.nan, p.min_r2, False)
    else:
        res.check("progress_slope_negative", pr.fit.slope, 0.0, pr.fit.slope < 0)
        res.check("progress_fit_r2", pr.fit.r2, p.min_r2, pr.fit.r2 >= p.min_r2)
    if p.control is not None:
        ctl = est.linear_progress_tail(ctx.measure(p.control), p.C, p.n_grid, p.samples, ctx.seed, ctx.pool, ctx.budget)
        _progress_rows(res, ctl, p.control)
        slope = ctl.fit.slope if ctl.fit is not None else math.nan
        res.check("control_no_decay", slope, 0.0, ctl.no_decay())


def _progress_rows(res: SuiteResult, pr, name: str) -> None:
    for n, prob, cnt in zip(pr.n_grid, pr.probabilities, pr.counts):
        res.row("linear_progress_tail", f"length@{name}", n, "probability", float(prob), math.sqrt(prob * (1 - prob) / pr.samples), pr.samples)
    if pr.fit is not None:
        res.row("linear_progress_tail", f"length@{name}", "fit", "slope", pr.fit.slope, pr.fit.slope_se, pr.samples)
        res.row("linear_progress_tail", f"length@{name}", "fit", "r2", pr.fit.r2, math.nan, pr.samples)
    keep = pr.counts > 0
    res.series.append(
        Series("progress", name, [float(n) for n, k in zip(pr.n_grid, keep) if k], [float(x) for x, k in zip(pr.probabilities, keep) if k], "n", f"P[d(id,Z_n) <= n/{pr.C:g}]", True)
    )


# -- registry ------------------------------------------------------------------------------------------------


SUITES: dict[str, Suite] = {
    s.name: s
    for s in [
        Suite(
            "deviation",
            "defect tails, deviation constants, variance bound, Efron-Stein and higher moments",
            """Samples Gromov products (id, Z_{n+m})_{Z_n} of the word-length cocycle on an
(n, m) grid and fits an exponential tail A exp(-B c) at every grid point.  Passes when
each fitted B is positive and the spread of B across the grid is below max_variation.
The first listed measure additionally gets grid estimates of tau_1, tau_2 and chi_2,
the check Var[Q_n]/n <= 4 chi_2 + 16 tau_2 (+5 SE), the Efron-Stein comparison for the
length cocycle and for an additive cocycle (where it is an equality), and a trend test
on the p-th central moment ratio.
params: measures, grid, thresholds, samples, max_variation, tau_grid, tau_samples,
variance_grid, variance_samples, moment_p, moment_grid, moment_samples, efron_stein_n,
efron_stein_samples, additive""",
            _run_deviation,
            lambda p: p.measures[0],
        ),
        Suite(
            "clt",
            "speed, Gaussian fluctuations and a non-Gaussian control",
            """Estimates the speed E Q_n / n with the bracket (E Q_n -+ tau_1)/n on the limit,
then runs the central limit check: (Q_n - mean)/sqrt(n) against a centered Normal with
fitted variance, per n.  Passes when the KS distance at the largest n is below
ks_threshold, decreases along the grid, and the fitted variance is more than 5 standard
errors above zero.  The optional control (meant for the integer line, where |S_n|/sqrt(n)
tends to a half-normal) must be flagged non-Gaussian: KS from the Normal above the
threshold and smaller KS from the folded-normal oracle.
params: measure, control, n_grid, samples, ks_threshold, speed_n, speed_samples,
speed_expected, speed_tolerance, bracket_grid, bracket_samples""",
            _run_clt,
            lambda p: p.measure,
        ),
        Suite(
            "green",
            "Green distances from hitting probabilities",
            """Precondition: the driving measure must be symmetric (mu(g) = mu(g^-1)); the Green
distance is only a metric in that case and asymmetric measures are refused.
Estimates F(z) = P[walk ever hits z] by direct simulation truncated at a horizon and an
escape radius (both bias F down), reports d_G = -log F with its standard error, the
horizon-halving delta and the mean hitting time.  On the simple walk over a D-regular
tree every target is checked against d_G = |z| log(D-1) within tolerance.  Also prints
exact return probabilities mu^{2k}(id) and their decay ratio (below 1 off amenable groups).
Targets with zero hits are reported with the resolvable lower bound log(trials).
params: measure, targets [{word, trials}], horizon, radius, tolerance, spectral_k, cache""",
            _run_green,
            lambda p: p.measure,
        ),
        Suite(
            "entropy",
            "asymptotic entropy as the speed in the Green metric",
            """Precondition: symmetric measure whose support generates a nonamenable group.
Estimates E d_G(id, Z_n) on an n grid, with Green distances from a tilted importance
sampler whose tilt rate comes from a direct pilot run, and fits the slope by weighted
least squares.  The slope must not exceed min_n H(mu^n)/n from exact convolution by more
than 3 standard errors, and on regular trees must match the closed form within tolerance.
params: measure, n_grid, samples, horizon, trials, pilot_trials, exact_n, tolerance""",
            _run_entropy,
            lambda p: p.measure,
        ),
        Suite(
            "sensitivity",
            "Girsanov reweighting, speed derivative and Lipschitz audit",
            """Checks the change-of-measure identity by exact enumeration for n <= identity_n,
polynomiality of t -> E^t[F], and a reweighted estimate against direct simulation.
For each curve mu_t = mu_0 + t(mu_1 - mu_0) compares (1/n) Cov(Q_n, sum nu(X_j)) with a
Richardson finite difference of E Q_n / n over t in ts (paths coupled through common
uniforms); curves marked expect_zero must give zero within 3 SE.  For each Lipschitz pair
checks |delta speed| / nu below C = 2(1 + sup nu) chi_1 + 4 sup tau_1.
params: curves [{base, end, expect_zero, nu}], n_grid, samples, ts, girsanov {base, other},
girsanov_n, girsanov_samples, identity_n, lipschitz [{base, other}], lipschitz_n,
lipschitz_samples, tau_samples""",
            _run_sensitivity,
            lambda p: p.girsanov.base,
        ),
        Suite(
            "decompose-check",
            "exact algebraic identities of cocycles and their defects",
            """Reconstructs Q_n from its dyadic decomposition for every n in 2..n_max and every block
exponent, for each listed cocycle (relative residual <= tolerance).  Checks on sampled
(trajectory, n, m) that the word-length defect equals minus twice the Gromov product
computed independently from normal forms, that additive defects vanish, and reports the
sup of the Brooks counting quasimorphism defect.
params: measure, n_max, trajectories, cocycles, gromov_samples, gromov_trajectories,
gromov_horizon, quasimorphism_samples, tolerance""",
            _run_decompose,
            lambda p: p.measure,
        ),
        Suite(
            "lazy-check",
            "exact lazy-walk decomposition",
            """For a measure with an atom at the identity, enumerates all increment tuples up to
n_max and checks that Z_n given N_n = k (idle steps) has the law of the stripped walk at
time n - k, that N_n is Binomial(n, mu(id)), and that idle pattern and stripped path
are independent.
params: measure, n_max, tolerance""",
            _run_lazy,
            lambda p: p.measure,
        ),
        Suite(
            "linear-progress",
            "exponential decay of slow-progress probabilities",
            """Estimates P[d(id, Z_n) <= n/C] along an n grid and fits log P linearly in n
(zero-count points dropped).  Passes when the slope is negative with R^2 >= min_r2; the
optional control (integer line) must show no decay.
params: measure, control, C, n_grid, samples, min_r2""",
            _run_progress,
            lambda p: p.measure,
        ),
    ]
}


def list_suites() -> list[str]:
    return list(SUITES)


def get_suite(name: str) -> Suite:
    if name not in SUITES:
        close = difflib.get_close_matches(name, SUITES, n=3, cutoff=0.3)
        hint = f"; did you mean {', '.join(close)}?" if close else ""
        raise KeyError(f"unknown suite {name!r}{hint} (available: {', '.join(SUITES)})")
    return SUITES[name]


def describe(name: str) -> str:
    s = get_suite(name)
    return f"{s.name}: {s.summary}\n\n{s.doc}\n"


def run_suite(name: str, ctx: Context, params) -> SuiteResult:
    res = SuiteResult()
    try:
        get_suite(name).run(ctx, params, res)
    except BudgetExceeded as exc:
        res.incomplete = True
        res.notes.append(str(exc))
    return res

