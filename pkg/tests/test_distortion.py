import numpy as np
import pytest
from hypothesis import given, strategies as st

from extremax.distortion import (Estimate, Outcome, average_distortion, d_argmax, d_argmax_batch,
                                 d_max, d_max_batch, d_pair, d_pair_batch, discrete_expected_max,
                                 evaluate, normalized_distortion)
from extremax.errors import DomainError
from extremax.sources import DiscreteSource, expected_max, uniform

O = Outcome((0.3, 0.9))


def test_outcome_fields():
    assert O.z_max == 0.9
    assert O.z_argmax == frozenset({2})
    assert Outcome((0.7, 0.7, 0.1)).z_argmax == frozenset({1, 2})


def test_d_max_examples():
    assert d_max(O, 0.9) == 0.0
    assert d_max(O, 0.5) == pytest.approx(0.4)
    assert d_max(O, 1.0) == 0.9


def test_d_argmax_examples():
    assert d_argmax(O, 2) == 0.0
    assert d_argmax(O, 1) == pytest.approx(0.6)
    assert d_argmax(Outcome((0.7, 0.7)), 1) == 0.0
    with pytest.raises(DomainError):
        d_argmax(O, 3)


def test_d_pair_examples():
    assert d_pair(O, 0.9, 2) == 0.0
    assert d_pair(O, 0.5, 1) == 0.9
    assert d_pair(O, 0.8, 2) == pytest.approx(0.1)


def test_negative_estimates_rejected():
    with pytest.raises(DomainError):
        d_max(O, -0.1)
    with pytest.raises(DomainError):
        Estimate()


def test_normalized_distortion_examples():
    U = uniform()
    assert normalized_distortion(1 / 24, U, 2) == pytest.approx(1 / 16, abs=1e-12)
    assert normalized_distortion(0.0, U, 2) == 0.0
    assert normalized_distortion(expected_max(U, 3), U, 3) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(DomainError):
        normalized_distortion(0.1, DiscreteSource((0.0,), (1.0,)), 2)


def test_discrete_expected_max_by_enumeration():
    src = DiscreteSource((0.0, 1.0, 3.0), (0.2, 0.5, 0.3))
    import itertools
    oracle = sum(max(src.support[i] for i in t) * np.prod([src.pmf[i] for i in t])
                 for t in itertools.product(range(3), repeat=3))
    assert discrete_expected_max(src, 3) == pytest.approx(oracle, abs=1e-14)


def test_sequence_average_is_fold():
    outs = [Outcome((0.3, 0.9)), Outcome((0.5, 0.2))]
    ests = [Estimate(z_argmax=1), Estimate(z_argmax=1)]
    assert average_distortion(outs, ests, "argmax") == pytest.approx(0.3)
    with pytest.raises(DomainError):
        evaluate(O, ests[0], "median")


values = st.lists(st.floats(0.0, 10.0, allow_nan=False), min_size=1, max_size=6)


@given(values, st.data())
def test_pair_reduces_to_max_on_correct_index(vals, data):
    o = Outcome(tuple(vals))
    i = data.draw(st.sampled_from(sorted(o.z_argmax)))
    z = data.draw(st.floats(0.0, 12.0))
    assert d_pair(o, z, i) == d_max(o, z)


@given(values, st.data())
def test_zero_iff_exact(vals, data):
    o = Outcome(tuple(vals))
    i = data.draw(st.integers(1, o.n))
    assert (d_argmax(o, i) == 0.0) == (i in o.z_argmax)
    z = data.draw(st.floats(0.0, 12.0))
    if o.z_max > 0:
        assert (d_max(o, z) == 0.0) == (z == o.z_max)
    assert d_argmax(o, i) >= 0 and 0 <= d_max(o, z) <= o.z_max


@given(values, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_d_max_monotone_then_jump(vals, a, b):
    o = Outcome(tuple(vals))
    z1, z2 = sorted((a * o.z_max, b * o.z_max))
    assert d_max(o, z2) <= d_max(o, z1)
    above = np.nextafter(o.z_max, np.inf)
    assert d_max(o, above) == o.z_max


def test_batch_forms_match_scalar():
    rng = np.random.Generator(np.random.Philox(1))
    x = rng.random((500, 3))
    z = rng.random(500)
    i = rng.integers(0, 3, 500)
    for s in range(500):
        o = Outcome(tuple(x[s]))
        assert d_max_batch(x, z)[s] == pytest.approx(d_max(o, z[s]))
        assert d_argmax_batch(x, i)[s] == pytest.approx(d_argmax(o, i[s] + 1))
        assert d_pair_batch(x, z, i)[s] == pytest.approx(d_pair(o, z[s], i[s] + 1))
