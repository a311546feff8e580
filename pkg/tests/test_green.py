import math

import numpy as np
import pytest

from cocycle_lab.green import (
    AmenableSupportError,
    AsymmetricMeasureError,
    GreenTable,
    conditional_hitting_times,
    entropy_estimate,
    exact_entropy_bounds,
    generates_nonamenable,
    green_cocycle,
    green_distance,
    spectral_radius_diagnostic,
)
from cocycle_lab.groups import FreeProductOfCyclics
from cocycle_lab.measures import simple_random_walk, table
from cocycle_lab.walk import generate


def test_hitting_a_neighbour_on_f2(srw):
    """On the 4-regular tree F(a) = 1/3."""
    e = green_distance(srw.backend.element("a"), srw, 400, 3000, 1)
    assert abs(e.f_hat - 1 / 3) < 4 * e.f_se + 0.01
    assert e.d_hat == pytest.approx(-math.log(e.f_hat))
    assert e.d_se == pytest.approx(e.f_se / e.f_hat)


def test_tilted_sampler_is_exact_at_log3(srw):
    z = srw.backend.element("abA")
    e = green_distance(z, srw, 200, 50, 2, "tilted", lam=math.log(3))
    assert e.d_hat == pytest.approx(3 * math.log(3), abs=1e-9)


def test_triangle_inequality_along_a_geodesic(srw):
    b = srw.backend
    d = {w: green_distance(b.element(w), srw, 300, 6000, 3) for w in ("a", "b", "ab")}
    slack = 3 * math.hypot(d["a"].d_se, d["b"].d_se, d["ab"].d_se)
    assert d["ab"].d_hat <= d["a"].d_hat + d["b"].d_hat + slack


def test_identity_and_unhit_targets(srw):
    b = srw.backend
    assert green_distance(b.element("id"), srw, 10, 5, 0).d_hat == 0.0
    far = green_distance(b.element("abababab"), srw, 20, 30, 0)
    assert far.infinite and far.d_hat == math.inf
    assert far.lower_bound == pytest.approx(math.log(30))


def test_asymmetric_measure_rejected(f2):
    m = table(f2, {"a": 0.4, "A": 0.1, "b": 0.25, "B": 0.25})
    with pytest.raises(AsymmetricMeasureError):
        green_distance(f2.element("a"), m, 10, 10, 0)
    with pytest.raises(AsymmetricMeasureError):
        GreenTable(m, 10, 10, 0)


def test_horizon_curve_is_monotone(srw):
    e = green_distance(srw.backend.element("ab"), srw, 400, 800, 4)
    assert list(e.curve) == sorted(e.curve)
    assert math.isfinite(e.stability_delta) and e.stability_delta >= 0


def test_cache_roundtrip_and_merge(tmp_path, srw):
    path = tmp_path / "green.cache"
    path.write_text("other-key a 10 10 3.0\n")
    b = srw.backend
    t1 = GreenTable(srw, 200, 300, 5)
    t1.prefill([b.element("a"), b.element("ab")])
    t1.save(path)
    lines = path.read_text().splitlines()
    assert "other-key a 10 10 3.0" in lines
    mine = [ln.split() for ln in lines if ln.startswith(t1.key)]
    assert sorted(p[1] for p in mine) == ["a", "ab"]
    assert all(p[2] == "200" and p[3] == "300" for p in mine)
    t2 = GreenTable(srw, 200, 300, 5)
    assert t2.load(path) == 2
    for w in ("a", "ab"):
        z = b.element(w)
        assert t2.entries[z].f_hat == pytest.approx(t1.entries[z].f_hat)
        assert t2.entries[z].f_se == pytest.approx(t1.entries[z].f_se)
    assert GreenTable(srw, 200, 301, 5).load(path) == 0


def test_green_length_cocycle(srw):
    t = GreenTable(srw, 100, 50, 0, "tilted", math.log(3))
    c = green_cocycle(t)
    path = generate(srw, 6, 0, 0)
    assert c.value(path, 6) == pytest.approx(path.length_at(6) * math.log(3), abs=1e-9)


def test_nonamenability_heuristic(srw, line):
    assert generates_nonamenable(srw)
    assert not generates_nonamenable(simple_random_walk(line))
    assert not generates_nonamenable(simple_random_walk(FreeProductOfCyclics([2, 2])))
    assert not generates_nonamenable(table(srw.backend, {"a": 0.5, "A": 0.5}))
    assert generates_nonamenable(simple_random_walk(FreeProductOfCyclics([2, 2, 2])))


def test_entropy_refuses_amenable_support(line):
    with pytest.raises(AmenableSupportError):
        entropy_estimate(simple_random_walk(line), [4, 8], 10, 0)


def test_exact_entropy_bounds(srw):
    bounds = exact_entropy_bounds(srw, 5)
    assert bounds[0] == (1, pytest.approx(math.log(4)))
    vals = [v for _, v in bounds]
    assert vals == sorted(vals, reverse=True)
    assert vals[-1] > 0.5 * math.log(3)


def test_entropy_on_f2_small(srw):
    res = entropy_estimate(srw, [8, 16, 24], 300, 1, N=150, M=8, pilot_trials=600)
    assert abs(res.report.estimate - 0.5 * math.log(3)) < 0.1
    assert res.report.estimate <= res.bound + 3 * res.report.stderr


def test_spectral_diagnostic(srw, line):
    assert spectral_radius_diagnostic(srw, 5).ratio < 0.9
    assert spectral_radius_diagnostic(simple_random_walk(line), 20).ratio > 0.95


def test_conditional_hitting_times_grow(srw):
    b = srw.backend
    rows = conditional_hitting_times(srw, [b.element("a"), b.element("abab")], 300, 3000, 6)
    assert rows[0][1] < rows[1][1]
