import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from safegame.errors import ConfigurationError, DomainError
from safegame.strategies import (closed_form_pair, feedback_pair, nash_adversary, nash_control,
                                 saddle_gap)

from safegame.problems import bounded_problem

from conftest import interior

_BOUNDED = bounded_problem()
_POINTS = interior(_BOUNDED, 500, seed=7)

# independent evaluation of -2 (0.5^0.5 / 0.75^-0.25 + 0.5^1.5 / 0.75^0.25)
U1_AT_HALF = -2.0759097


def test_nash_control_examples(bounded):
    np.testing.assert_array_equal(nash_control(bounded.game, bounded.exact, [0.0, 0.0]), [0, 0])
    u = nash_control(bounded.game, bounded.exact, [0.5, 0.0])
    assert u[1] == 0.0
    np.testing.assert_allclose(u[0], U1_AT_HALF, atol=1e-7)
    closed = -2 * (0.5 ** 0.5 / 0.75 ** -0.25 + 0.5 ** 1.5 / 0.75 ** 0.25)
    np.testing.assert_allclose(u[0], closed, rtol=1e-12)


def test_nash_adversary_examples(unbounded):
    np.testing.assert_array_equal(nash_adversary(unbounded.game, unbounded.exact, [0, 0]), [0, 0])
    np.testing.assert_allclose(nash_adversary(unbounded.game, unbounded.exact, [1.0, 0.0]),
                               [2.0, 0.0], rtol=1e-12)


def test_adversary_is_minus_half_control(problem):
    X = interior(problem, 1000)
    u = nash_control(problem.game, problem.exact, X)
    a = nash_adversary(problem.game, problem.exact, X)
    np.testing.assert_allclose(a, -u / 2, rtol=1e-12, atol=1e-12)


def test_nash_inputs_outside_safe_set(bounded):
    with pytest.raises(DomainError):
        nash_control(bounded.game, bounded.exact, [1.2, 0.0])


def test_closed_form_pair_matches_general_formula(problem):
    pair = closed_form_pair(problem.name)
    np.testing.assert_array_equal(np.concatenate(pair(np.zeros((1, 2)))), 0)
    X = interior(problem, 1000)
    gen = feedback_pair(problem.game, problem.exact)(X)
    for a, b in zip(pair(X), gen):
        np.testing.assert_allclose(a, b, atol=1e-10, rtol=1e-10)


def test_closed_form_pair_validation():
    with pytest.raises(ConfigurationError):
        closed_form_pair("bounded", 1.5, 0.5)
    with pytest.raises(ConfigurationError):
        closed_form_pair("custom")


def test_saddle_gap_zero_at_equilibrium(problem):
    X = interior(problem, 100)
    u, a = feedback_pair(problem.game, problem.exact)(X)
    ga, gu = saddle_gap(problem.game, problem.exact, X, u, a)
    np.testing.assert_allclose(ga, 0, atol=1e-12)
    np.testing.assert_allclose(gu, 0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=4, max_size=4), st.integers(0, 499))
def test_saddle_gaps_are_quadratic_forms(inputs, idx):
    p = _BOUNDED
    x = _POINTS[idx]
    u, a = np.array(inputs[:2]), np.array(inputs[2:])
    us, as_ = feedback_pair(p.game, p.exact)(x[None])
    ga, gu = saddle_gap(p.game, p.exact, x, u, a)
    np.testing.assert_allclose(ga, -0.5 * np.sum((a - as_[0]) ** 2), atol=1e-10)
    np.testing.assert_allclose(gu, 0.25 * np.sum((u - us[0]) ** 2), atol=1e-10)
    assert ga <= 1e-12 and gu >= -1e-12

