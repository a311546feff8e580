import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cocycle_lab.rng import COUPLING, GREEN, PILOT, REPLACEMENT, WALK, substream


@given(st.integers(0, 2**63), st.integers(0, 2**40))
def test_substream_is_a_pure_function_of_its_key(seed, index):
    a = substream(seed, index).random(8)
    b = substream(seed, index).random(8)
    assert np.array_equal(a, b)


def test_streams_and_indices_are_distinct():
    draws = {
        (s, i): tuple(substream(7, i, s).random(4))
        for s in (WALK, REPLACEMENT, GREEN, PILOT, COUPLING)
        for i in range(20)
    }
    assert len(set(draws.values())) == len(draws)


def test_rejects_bad_keys():
    with pytest.raises(ValueError):
        substream(-1, 0)
    with pytest.raises(ValueError):
        substream(0, 1 << 48)
