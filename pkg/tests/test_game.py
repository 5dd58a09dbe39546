import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from safegame.errors import ConfigurationError, DomainError, NumericError
from safegame.game import (PredefinedTimeParams, StrategyParams, gamma_constant, hamiltonian,
                           rhs, running_cost, signed_power, spd_solve)
from safegame.problems import bounded_phi, make_problem

from conftest import interior

# mpmath quadrature of int_0^inf dV / (2^0.75 V^0.75 + 2 V^1.25), 30 digits
GAMMA_BENCHMARK = 3.42593108162


def test_gamma_at_benchmark_parameters():
    g = gamma_constant(2 ** 0.75, 2.0, 0.75, 1.25, 1.0)
    np.testing.assert_allclose(g, GAMMA_BENCHMARK, rtol=1e-10)
    assert abs(g - 3.4259) <= 5e-4


def test_gamma_half_integer_case_is_pi_over_alpha():
    for alpha in (0.5, 1.0, 3.0):
        np.testing.assert_allclose(gamma_constant(alpha, alpha, 0.5, 1.5, 1.0), math.pi / alpha,
                                   rtol=1e-13)


def test_gamma_function_identity():
    np.testing.assert_allclose(math.gamma(0.5), math.sqrt(math.pi), rtol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 5), st.floats(0.2, 5), st.floats(0.05, 0.9), st.floats(1.1, 3.0))
def test_gamma_matches_settling_integral(alpha, beta, p, q):
    from scipy.integrate import quad

    f = lambda v: 1.0 / (alpha * v ** p + beta * v ** q)
    ref = quad(f, 0, 1, limit=200)[0] + quad(f, 1, np.inf, limit=200)[0]
    np.testing.assert_allclose(gamma_constant(alpha, beta, p, q, 1.0), ref, rtol=1e-6)


@pytest.mark.parametrize("args", [(1, 1, 1.2, 1.5, 1), (1, 1, 0.5, 0.9, 1), (0, 1, 0.5, 1.5, 1),
                                  (1, 1, 0.5, 1.5, -1)])
def test_gamma_rejects_invalid_parameters(args):
    with pytest.raises(DomainError):
        gamma_constant(*args)


def test_predefined_time_params_default_rate_is_one():
    ptp = PredefinedTimeParams.from_strategy_exponents(0.5, 1.5)
    assert ptp.T_p == ptp.gamma
    assert ptp.rate == 1.0
    with pytest.raises(ConfigurationError, match="p\\*r < 1"):
        PredefinedTimeParams(1, 1, 1.2, 1.5)
    with pytest.raises(ConfigurationError):
        PredefinedTimeParams(1, 1, 0.5, 1.5, T_p=-1)


@pytest.mark.parametrize("g1,g2", [(0.0, 1.5), (1.0, 1.5), (0.5, 1.0), (-0.5, 2.0)])
def test_strategy_params_reject_bad_exponents(g1, g2):
    with pytest.raises(ConfigurationError):
        StrategyParams(g1, g2)


def test_signed_power_examples():
    assert signed_power(-4.0, 0.5) == -2.0
    assert signed_power(0.0, 0.5) == 0.0
    np.testing.assert_allclose(signed_power(0.5, 1.5), 0.353553390593, rtol=1e-11)


@given(st.floats(-1e3, 1e3), st.floats(0.1, 3))
def test_signed_power_is_odd(y, eta):
    np.testing.assert_allclose(signed_power(-y, eta), -signed_power(y, eta))


def test_rhs_examples(bounded):
    g = bounded.game
    np.testing.assert_array_equal(rhs(g, [0, 0], [0, 0], [0, 0]), [0, 0])
    np.testing.assert_allclose(rhs(g, [-0.5, 0.5], [0, 0], [0, 0]), [0.5, -0.5])
    np.testing.assert_allclose(rhs(g, [0.3, -0.2], [1, 1], [-1, -1]), [0, 0])


def test_running_cost_examples(bounded):
    g = bounded.game
    assert running_cost(g, [0, 0], [0, 0], [0, 0]) == 0.0
    X = interior(bounded, 50)
    L = g.cost.state_cost(X)
    np.testing.assert_allclose(running_cost(g, X, np.zeros_like(X), np.zeros_like(X)), L)
    x = np.array([[0.5, 0.0]])
    expect = g.cost.state_cost(x)[0] + g.cost.control_cross(x)[0, 0] + 0.25
    np.testing.assert_allclose(running_cost(g, x[0], [1, 0], [0, 0]), expect, rtol=1e-14)


def test_running_cost_outside_safe_set(bounded):
    with pytest.raises(DomainError):
        running_cost(bounded.game, [1.0, 0.0], [0, 0], [0, 0])


def test_hamiltonian_examples(problem):
    g = problem.game
    assert hamiltonian(g, [0, 0], [0, 0], [0, 0], [3.0, -1.0]) == 0.0
    X = interior(problem, 100)
    rng = np.random.default_rng(0)
    U, A = rng.normal(size=X.shape), rng.normal(size=X.shape)
    np.testing.assert_allclose(hamiltonian(g, X, U, A, np.zeros_like(X)), running_cost(g, X, U, A))


def test_nash_inputs_zero_hamiltonian(problem):
    from safegame.game import nash_inputs

    X = interior(problem, 1000)
    lam = problem.exact.gradient(X)
    u, a = nash_inputs(problem.game, X, lam)
    np.testing.assert_allclose(hamiltonian(problem.game, X, u, a, lam), 0, atol=1e-8)


def test_safe_set_membership(bounded, unbounded):
    assert bounded.game.safe_set.contains([0.99, -0.99])
    assert not bounded.game.safe_set.contains([1.0, 0.0])
    assert unbounded.game.safe_set.contains([50.0, 0.5])
    assert not unbounded.game.safe_set.contains([0.0, -1.0])


def test_non_spd_weight_is_rejected(bounded):
    import dataclasses

    cost = dataclasses.replace(bounded.game.cost,
                               adversary_weight=lambda X: np.broadcast_to(-np.eye(2), (len(X), 2, 2)))
    game = dataclasses.replace(bounded.game, cost=cost)
    with pytest.raises(ConfigurationError, match="R_a"):
        game.validate_weights(np.zeros((1, 2)))
    with pytest.raises(NumericError):
        spd_solve(-np.eye(2)[None], np.ones((1, 2)))


def test_make_problem_unknown_example():
    with pytest.raises(ConfigurationError):
        make_problem("triangle")


def test_phi_is_odd_in_each_axis():
    X = np.array([[0.3, -0.7], [-0.3, 0.7]])
    phi = bounded_phi(X, 0.5, 1.5)
    np.testing.assert_allclose(phi[0], -phi[1])
