"""The two planar benchmark games (box-shaped and strip-shaped safe sets).

Dynamics: ``x1dot = -min(0, x1) + u1 + a1``, ``x2dot = -max(0, x2) + u2 + a2``.
The cost terms are built so that a known barrier value is the game value
(inverse optimality); both players use signed-power feedback with
exponents ``gamma1 < 1 < gamma2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .barrier import (BOUNDED_EXACT, UNBOUNDED_EXACT, BarrierCandidate, ExactValue,
                      _bounded_gradient, _unbounded_gradient, box_barrier, box_level,
                      strip_barrier, strip_level)
from .errors import ConfigurationError
from .game import (AffineDynamics, Game, PredefinedTimeParams, RunningCost, SafeSet,
                   StrategyParams, signed_power)

EXAMPLES = ("bounded", "unbounded")


def planar_drift(X):
    return -np.stack([np.minimum(0.0, X[:, 0]), np.maximum(0.0, X[:, 1])], axis=1)


def _identity_gain(X):
    return np.broadcast_to(np.eye(2), (X.shape[0], 2, 2))


def _scaled_identity(c):
    def weight(X):
        return np.broadcast_to(c * np.eye(2), (X.shape[0], 2, 2))
    return weight


def planar_dynamics():
    return AffineDynamics(planar_drift, _identity_gain, _identity_gain, n=2, m_u=2, m_a=2)


def bounded_phi(X, gamma1, gamma2):
    """Per-axis shaping term; the adversary plays it and the controller plays -2 times it."""
    s = 1.0 - X ** 2
    return (signed_power(X, gamma1) / s ** ((gamma1 - 1) / 2)
            + signed_power(X, gamma2) / s ** ((gamma2 - 1) / 2))


def unbounded_phi(X, gamma1, gamma2):
    s = (1.0 - X[:, 1] ** 2)[:, None]
    return (signed_power(X, gamma1) / s ** ((gamma1 - 1) / 2)
            + signed_power(X, gamma2) / s ** ((gamma2 - 1) / 2))


def _bounded_cost(gamma1, gamma2):
    def state_cost(X):
        phi = bounded_phi(X, gamma1, gamma2)
        x1, x2 = X[:, 0], X[:, 1]
        s1, s2 = 1.0 - x1 ** 2, 1.0 - x2 ** 2
        return (0.5 * phi[:, 0] ** 2 + 0.5 * phi[:, 1] ** 2
                + x1 / s1 * (1.0 + x1 ** 2 / s1) * np.minimum(0.0, x1)
                + x2 / s2 * (1.0 + x2 ** 2 / s2) * np.maximum(0.0, x2))

    def cross(X):
        return bounded_phi(X, gamma1, gamma2) - _bounded_gradient(X)

    return RunningCost(state_cost, cross, cross, _scaled_identity(0.25), _scaled_identity(0.5))


def _unbounded_cost(gamma1, gamma2):
    def state_cost(X):
        phi = unbounded_phi(X, gamma1, gamma2)
        x1, x2 = X[:, 0], X[:, 1]
        s = 1.0 - x2 ** 2
        nrm2 = x1 ** 2 + x2 ** 2
        return (0.5 * np.sum(phi ** 2, axis=1)
                + x1 / s * np.minimum(0.0, x1)
                + x2 / s * (1.0 + nrm2 / s) * np.maximum(0.0, x2))

    def cross(X):
        return unbounded_phi(X, gamma1, gamma2) - _unbounded_gradient(X)

    return RunningCost(state_cost, cross, cross, _scaled_identity(0.25), _scaled_identity(0.5))


@dataclass(frozen=True)
class Problem:
    """A game together with its known value, barrier candidate, and timing parameters."""

    name: str
    game: Game
    exact: ExactValue | None
    barrier: BarrierCandidate | None
    strategy_params: StrategyParams
    ptp: PredefinedTimeParams


def bounded_problem(gamma1=0.5, gamma2=1.5, T_p=None, wrapper="exp"):
    sp = StrategyParams(gamma1, gamma2)
    safe = SafeSet(box_level, "bounded", np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    game = Game(planar_dynamics(), _bounded_cost(gamma1, gamma2), safe)
    return Problem("bounded", game, BOUNDED_EXACT, box_barrier(wrapper), sp,
                   PredefinedTimeParams.from_strategy_exponents(gamma1, gamma2, T_p))


def unbounded_problem(gamma1=0.5, gamma2=1.5, T_p=None, wrapper="logistic", x1_extent=2.0):
    """Strip ``|x2| < 1``; sampling truncates ``x1`` to ``[-x1_extent, x1_extent]``."""
    sp = StrategyParams(gamma1, gamma2)
    safe = SafeSet(strip_level, "unbounded", np.array([-x1_extent, -1.0]),
                   np.array([x1_extent, 1.0]))
    game = Game(planar_dynamics(), _unbounded_cost(gamma1, gamma2), safe)
    return Problem("unbounded", game, UNBOUNDED_EXACT, strip_barrier(wrapper), sp,
                   PredefinedTimeParams.from_strategy_exponents(gamma1, gamma2, T_p))


def make_problem(example, gamma1=0.5, gamma2=1.5, T_p=None, wrapper=None):
    if example == "bounded":
        return bounded_problem(gamma1, gamma2, T_p, wrapper or "exp")
    if example == "unbounded":
        return unbounded_problem(gamma1, gamma2, T_p, wrapper or "logistic")
    raise ConfigurationError(f"unknown example {example!r}; expected one of {EXAMPLES}")
