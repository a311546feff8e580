import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cocycle_lab.estimators import (
    DegenerateFitWarning,
    EnumerationTooLarge,
    clt_suite,
    deviation_constants,
    deviation_tail,
    efron_stein_check,
    estimate_speed,
    estimate_variance_curve,
    higher_moment_ratio,
    lazy_decomposition_check,
    linear_progress_tail,
    mean_se,
    variance_se,
    wls,
)
from cocycle_lab.groups import FreeGroup, IntegerLine
from cocycle_lab.measures import Lazy, simple_random_walk
from cocycle_lab.walk import AdditiveSum, FirstLetterSign, LengthCocycle, TableFunction


def smooth_additive(b):
    """Additive cocycle with non-lattice increments, mean zero under the simple walk."""
    r = math.sqrt(2)
    return AdditiveSum(TableFunction(((b.element("a"), 1.0), (b.element("A"), -1.0), (b.element("b"), r), (b.element("B"), -r))), "smooth")


@given(st.floats(-5, 5), st.floats(-5, 5), st.lists(st.floats(0.1, 10), min_size=3, max_size=12))
def test_wls_recovers_exact_lines(a, b, w):
    x = np.arange(len(w), dtype=float)
    fit = wls(x, a + b * x, w)
    assert fit.slope == pytest.approx(b, abs=1e-9)
    assert fit.intercept == pytest.approx(a, abs=1e-9)


@given(st.lists(st.floats(-100, 100), min_size=3, max_size=50))
def test_mean_and_variance_helpers(x):
    m, se = mean_se(x)
    assert m == pytest.approx(np.mean(x), abs=1e-9)
    assert se == pytest.approx(np.std(x, ddof=1) / math.sqrt(len(x)), abs=1e-9)
    v, _ = variance_se(x)
    assert v == pytest.approx(np.var(x, ddof=1), rel=1e-9, abs=1e-9)


def test_speed_on_f2_with_bracket(srw):
    L = LengthCocycle()
    consts = deviation_constants(L, srw, [(8, 8), (16, 16)], 500, 1, (1,))
    r = estimate_speed(L, srw, 200, 2000, 3, constants=consts)
    assert abs(r.estimate - 0.5) < 4 * r.stderr + 0.01
    lo, hi = r.extras["bracket"]
    assert lo <= r.estimate <= hi
    assert consts.chi[1] == 1.0


def test_speed_on_integer_line_vanishes(line):
    r = estimate_speed(LengthCocycle(), simple_random_walk(line), 400, 2000, 3)
    assert r.estimate == pytest.approx(math.sqrt(2 / (math.pi * 400)), abs=5 * r.stderr)


def test_tail_rates_on_f2(srw):
    fit = deviation_tail(LengthCocycle(), srw, [(30, 30), (60, 60)], list(range(12)), 3000, 5)
    assert np.all(fit.rates > 0.7) and np.all(fit.rates < 1.6)
    assert fit.variation < 0.3


def test_tail_warns_when_degenerate(srw):
    with pytest.warns(DegenerateFitWarning):
        fit = deviation_tail(LengthCocycle(), srw, [(5, 5)], [50.0, 60.0], 200, 5)
    assert not fit.passes()


def test_additive_constants_vanish(srw):
    c = AdditiveSum(FirstLetterSign())
    consts = deviation_constants(c, srw, [(4, 4), (8, 8)], 200, 0)
    assert consts.tau[1] == 0.0 and consts.tau[2] == 0.0
    assert consts.chi[2] == 1.0


def test_variance_curve_of_sign_sum(srw):
    curve = estimate_variance_curve(AdditiveSum(FirstLetterSign()), srw, [16, 64], 3000, 2)
    for p in curve.points:
        assert abs(p.value - 1.0) < 5 * p.stderr


def test_variance_bound_holds_for_length(srw):
    L = LengthCocycle()
    consts = deviation_constants(L, srw, [(16, 16), (32, 32)], 500, 1)
    curve = estimate_variance_curve(L, srw, [32, 128], 800, 2, constants=consts)
    assert curve.bound == pytest.approx(4 * consts.chi[2] + 16 * consts.tau[2])
    assert not curve.violations()


def test_efron_stein(srw):
    add = efron_stein_check(smooth_additive(srw.backend), srw, 24, 120, 4)
    assert add.equality_holds()
    L = LengthCocycle()
    consts = deviation_constants(L, srw, [(8, 8), (16, 16)], 300, 1)
    ln = efron_stein_check(L, srw, 24, 120, 4, constants=consts)
    assert ln.inequality_holds()
    assert not ln.influence_violations()


def test_higher_moment_ratio_of_additive_is_gaussian(srw):
    mom = higher_moment_ratio(smooth_additive(srw.backend), srw, 4, [16, 32, 64, 128], 2000, 6)
    assert mom.passes()
    last = mom.points[-1]
    assert abs(last.value / (1.5**2) - 3.0) < 0.4


def test_clt_for_additive_sum(srw):
    res = clt_suite(smooth_additive(srw.backend), srw, [200], 4000, 8)
    assert res.points[0].ks <= 0.03
    assert res.points[0].sigma2 == pytest.approx(1.5, rel=0.1)


def test_lazy_decomposition_exact(srw):
    chk = lazy_decomposition_check(Lazy(srw, 0.3).to_table(), 3)
    assert chk.max_tv <= 1e-12
    assert chk.binomial_error <= 1e-12
    assert chk.independence_error <= 1e-12
    with pytest.raises(ValueError):
        lazy_decomposition_check(srw, 2)
    with pytest.raises(EnumerationTooLarge):
        lazy_decomposition_check(Lazy(srw, 0.3).to_table(), 8, max_tuples=1000)


def test_linear_progress_control(line):
    res = linear_progress_tail(simple_random_walk(line), 4, [16, 32, 64], 2000, 1)
    assert res.no_decay()


def test_linear_progress_decays_on_f2(srw):
    res = linear_progress_tail(srw, 4, list(range(8, 81, 8)), 20000, 1)
    assert res.decays(0.8)
