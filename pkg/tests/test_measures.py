import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cocycle_lab.groups import IDENTITY, FreeGroup
from cocycle_lab.measures import (
    ConvolutionCapError,
    GeometricLength,
    IncomparableMeasuresError,
    Lazy,
    MeasureCurve,
    MeasureError,
    NothingToStripError,
    convolution_powers,
    entropy_of,
    lazify,
    measure_distance,
    moment,
    simple_random_walk,
    table,
)
from cocycle_lab.rng import substream

from oracles import reduce_letters, syllables_to_letters


def test_table_validation(f2):
    with pytest.raises(MeasureError):
        table(f2, {"a": 0.5, "b": 0.4})
    with pytest.raises(MeasureError):
        table(f2, {"a": 1.0, "b": 0.0})
    with pytest.raises(MeasureError):
        table(f2, {"a": 0.5, "aaA": 0.5})


def test_symmetry(f2, srw):
    assert srw.is_symmetric()
    assert not table(f2, {"a": 0.6, "A": 0.4}).is_symmetric()
    assert GeometricLength(f2, 0.3).is_symmetric()


def test_geometric_pmf_sums_to_one(f2):
    m = GeometricLength(f2, 0.3)
    words = [f2.element("a" * L) if L else IDENTITY for L in range(200)]
    total = math.fsum(m.pmf(g) * f2.count_words(g.length) for g in words)
    assert total == pytest.approx(1.0, abs=1e-12)
    assert m.pmf(IDENTITY) == pytest.approx(0.3)


def test_geometric_sampler_matches_length_law(f2):
    m = GeometricLength(f2, 0.3)
    rng = substream(1, 0)
    lengths = np.array([sum(abs(e) for _, e in s) for s in m.sample_syllables(rng, 40000)])
    for L in range(4):
        assert np.mean(lengths == L) == pytest.approx(m.length_pmf(L), abs=0.01)


def test_lazy_pmf_and_lazify(srw):
    lz = Lazy(srw, 0.5)
    assert lz.pmf(IDENTITY) == 0.5
    assert lz.pmf(srw.backend.element("a")) == 0.125
    back = lazify(lz.to_table())
    assert back.pmf(srw.backend.element("A")) == pytest.approx(0.25)
    with pytest.raises(NothingToStripError):
        lazify(srw)


def test_measure_distance(f2, srw):
    other = table(f2, {"a": 0.3, "A": 0.2, "b": 0.25, "B": 0.25})
    assert measure_distance(srw, other) == pytest.approx(0.25)
    assert measure_distance(srw, srw) == 0.0
    with pytest.raises(IncomparableMeasuresError):
        measure_distance(srw, table(f2, {"a": 0.5, "A": 0.5}))
    assert measure_distance(GeometricLength(f2, 0.3), GeometricLength(f2, 0.4)) == math.inf


def test_curve_centering_and_direction(f2):
    m0 = table(f2, {"a": 0.3, "A": 0.2, "b": 0.25, "B": 0.25})
    m1 = table(f2, {"a": 0.4, "A": 0.1, "b": 0.25, "B": 0.25})
    c = MeasureCurve(m0, m1)
    assert c.at(0.5).pmf(f2.element("a")) == pytest.approx(0.35)
    d = c.direction()
    assert d[f2.element("a")] == pytest.approx(1 / 3)
    assert sum(d[g] * m0.pmf(g) for g in d) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(MeasureError):
        c.check_direction_table({f2.element(k): 0.1 for k in "aAbB"})


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_convolution_matches_path_enumeration(srw, n):
    b = srw.backend
    letters = [syllables_to_letters(g.syllables) for g in srw.support]
    brute = {}
    for combo in product(range(len(letters)), repeat=n):
        w = tuple(reduce_letters([x for i in combo for x in letters[i]], b.orders))
        brute[w] = brute.get(w, 0.0) + 0.25**n
    exact = convolution_powers(srw, n)[n]
    assert len(exact) == len(brute)
    for g, p in exact.probs.items():
        assert p == pytest.approx(brute[tuple(syllables_to_letters(g.syllables))], abs=1e-15)


def test_two_step_law_and_entropy(srw):
    b = srw.backend
    d2 = convolution_powers(srw, 2)[2]
    assert d2[IDENTITY] == pytest.approx(0.25)
    assert d2[b.element("aa")] == pytest.approx(1 / 16)
    assert entropy_of(convolution_powers(srw, 1)[1]) == pytest.approx(math.log(4))


def test_convolution_cap(srw):
    with pytest.raises(ConvolutionCapError):
        convolution_powers(srw, 8, cap=100)


@given(st.lists(st.floats(0.05, 1.0), min_size=4, max_size=4))
def test_moments_of_tables(w):
    f2 = FreeGroup(2)
    p = np.array(w) / sum(w)
    m = table(f2, dict(zip(["a", "Ab", "aBa", "id"], p)))
    assert moment(m, 1) == pytest.approx(p[0] + 2 * p[1] + 3 * p[2])
    assert moment(m, 2) == pytest.approx(p[0] + 4 * p[1] + 9 * p[2])
