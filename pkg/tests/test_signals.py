import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isslab.signals import InputSignal, concat, parse_signal, random_signal, restrict, shift, sup_norm


def _rand(seed, switches=3, magnitude=5.0):
    return random_signal(np.random.default_rng(seed), magnitude, switches, 10.0)


def test_sup_norm_examples():
    assert sup_norm(InputSignal.constant(0.0)) == 0.0
    assert sup_norm(InputSignal.steps([(0, 2), (1, -3)])) == 3.0


def test_sup_norm_matches_scan():
    rng = np.random.default_rng(11)
    starts = np.concatenate([[0.0], np.sort(rng.uniform(0.1, 50.0, 99))])
    vals = rng.uniform(-5, 5, 100)
    u = InputSignal(tuple(starts), tuple((v,) for v in vals))
    assert sup_norm(u) == max(abs(v) for v in vals)


def test_vector_values_use_euclidean_norm():
    assert sup_norm(InputSignal.constant((3.0, 4.0))) == 5.0


def test_construction_invariants():
    with pytest.raises(ValueError):
        InputSignal((0.5,), ((1.0,),))
    with pytest.raises(ValueError):
        InputSignal((0.0, 2.0, 1.0), ((1.0,), (2.0,), (3.0,)))
    with pytest.raises(ValueError):
        InputSignal((0.0,), ((math.nan,),))
    with pytest.raises(ValueError):
        InputSignal((0.0, 1.0), ((1.0,), (1.0, 2.0)))


def test_right_continuity():
    u = InputSignal.steps([(0, 1), (2, 5)])
    assert u.value(1.999) == (1.0,)
    assert u.value(2.0) == (5.0,)


def test_equal_neighbours_merge():
    assert InputSignal.steps([(0, 1), (1, 1), (2, 3)]) == InputSignal.steps([(0, 1), (2, 3)])


def test_shift_examples():
    u = _rand(1)
    assert shift(u, 0) == u
    assert shift(InputSignal.steps([(0, 1), (2, 5)]), 3) == InputSignal.constant(5)
    with pytest.raises(ValueError):
        shift(u, -1.0)


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 5), st.floats(0.0, 20.0))
def test_shift_norm_and_pointwise(seed, switches, tau):
    u = _rand(seed, switches)
    s = shift(u, tau)
    assert sup_norm(s) <= sup_norm(u)
    for t in np.linspace(0.0, 12.0, 25):
        assert s.value(t) == u.value(t + tau)


def test_concat_examples():
    one = InputSignal.constant(1.0)
    assert concat(one, one, 2.0) == one
    c = concat(one, InputSignal.constant(2.0), 1.0)
    assert c.value(0.5) == (1.0,)
    assert c.value(1.5) == (2.0,)
    with pytest.raises(ValueError):
        concat(one, one, 0.0)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 10**6), st.floats(0.01, 15.0))
def test_concat_properties(s1, s2, t):
    u1, u2 = _rand(s1), _rand(s2)
    c = concat(u1, u2, t)
    # constructor re-validates, so reaching here means the invariants hold
    assert c.starts[0] == 0.0
    assert sup_norm(c) <= max(sup_norm(u1), sup_norm(u2))
    for s in np.linspace(0.0, t, 9, endpoint=False):
        assert c.value(s) == u1.value(s)
    for s in np.linspace(0.0, 5.0, 9):
        assert c.value(t + s) == u2.value(s)


def test_restrict_sees_only_the_past():
    u = _rand(4)
    other = concat(u, _rand(5), 1.3)
    assert restrict(u, 1.3) == restrict(other, 1.3)
    assert restrict(u, 1.3).horizon == 1.3


@pytest.mark.parametrize(
    "text, expected",
    [
        ("const(2.5)", InputSignal.constant(2.5)),
        ("const([1, 2])", InputSignal.constant((1.0, 2.0))),
        ("steps[(0, 0), (1, 2)]", InputSignal.steps([(0, 0), (1, 2)])),
    ],
)
def test_parse_signal(text, expected):
    u = parse_signal(text)
    assert u == expected
    assert parse_signal(u.text()) == u


@pytest.mark.parametrize("text", ["const()", "ramp(1)", "steps[(1, 2)]", "steps[(0,"])
def test_parse_signal_errors(text):
    with pytest.raises(ValueError):
        parse_signal(text)


def test_random_signal_is_seeded():
    assert _rand(9, 3) == _rand(9, 3)
    u = _rand(9, 3, magnitude=2.0)
    assert sup_norm(u) <= 2.0
    assert len(u.starts) <= 4
