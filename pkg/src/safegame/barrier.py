"""Closed-form Nash values, barrier candidates, and analytic checks.

The two closed-form values belong to the box-shaped safe set
``|x1| < 1, |x2| < 1`` and the strip ``|x2| < 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError
from .game import _as_batch, _unbatch, nash_inputs, spd_solve


def box_level(X):
    return np.minimum(1.0 - X[:, 0] ** 2, 1.0 - X[:, 1] ** 2)


def strip_level(X):
    return 1.0 - X[:, 1] ** 2


def _check(X, level):
    s = level(X)
    if np.any(~(s > 0)):
        i = int(np.argmax(~(s > 0)))
        raise DomainError(f"state {X[i].tolist()} is outside the safe set")


def _bounded_value(X):
    s = 1.0 - X ** 2
    return np.sum(X ** 2 / (2.0 * s), axis=1)


def _bounded_gradient(X):
    s = 1.0 - X ** 2
    return X / s * (1.0 + X ** 2 / s)


def _unbounded_value(X):
    s = 1.0 - X[:, 1] ** 2
    return np.sum(X ** 2, axis=1) / (2.0 * s)


def _unbounded_gradient(X):
    s = 1.0 - X[:, 1] ** 2
    nrm2 = np.sum(X ** 2, axis=1)
    g = X / s[:, None]
    g[:, 1] *= 1.0 + nrm2 / s
    return g


def bounded_value(x):
    """``x1^2/(2 s1) + x2^2/(2 s2)`` with ``s_i = 1 - x_i^2``."""
    X, single = _as_batch(x, 2)
    _check(X, box_level)
    return _unbatch(_bounded_value(X), single)


def unbounded_value(x):
    """``|x|^2 / (2 s)`` with ``s = 1 - x2^2``."""
    X, single = _as_batch(x, 2)
    _check(X, strip_level)
    return _unbatch(_unbounded_value(X), single)


@dataclass(frozen=True)
class ExactValue:
    """A known value function with its analytic gradient (batch callables)."""

    value_fn: Callable
    gradient_fn: Callable
    level: Callable
    name: str = "exact"

    def _prep(self, x):
        X, single = _as_batch(x)
        _check(X, self.level)
        return X, single

    def value(self, x):
        X, single = self._prep(x)
        return _unbatch(self.value_fn(X), single)

    def gradient(self, x):
        X, single = self._prep(x)
        return _unbatch(self.gradient_fn(X), single)

    def value_and_gradient(self, x):
        X, single = self._prep(x)
        return _unbatch(self.value_fn(X), single), _unbatch(self.gradient_fn(X), single)


BOUNDED_EXACT = ExactValue(_bounded_value, _bounded_gradient, box_level, "bounded")
UNBOUNDED_EXACT = ExactValue(_unbounded_value, _unbounded_gradient, strip_level, "unbounded")


def value_gradient(exact, x):
    return exact.gradient(x)


# -- barrier candidates -------------------------------------------------------

def _exp(y):
    e = np.exp(y)
    return e, e, e


def _logistic(y):
    h = 0.5 * (1.0 + np.tanh(0.5 * y))
    d1 = h * (1.0 - h)
    return h, d1, d1 * (1.0 - 2.0 * h)


WRAPPERS = {"exp": _exp, "logistic": _logistic}


@dataclass(frozen=True)
class BarrierCandidate:
    """``B`` (zero at the origin, divergent at the boundary) and the positive wrapper ``h``.

    ``wrapper_terms(y)`` returns ``(h, h', h'')``.
    """

    name: str
    value_fn: Callable
    gradient_fn: Callable
    level: Callable
    wrapper_name: str

    def value(self, x):
        X, single = _as_batch(x)
        _check(X, self.level)
        return _unbatch(self.value_fn(X), single)

    def gradient(self, x):
        X, single = _as_batch(x)
        _check(X, self.level)
        return _unbatch(self.gradient_fn(X), single)

    def wrapper_terms(self, y):
        return WRAPPERS[self.wrapper_name](np.asarray(y, dtype=float))

    def wrapper(self, y):
        return self.wrapper_terms(y)[0]

    def wrapper_derivative(self, y):
        return self.wrapper_terms(y)[1]


def _box_barrier(X):
    return np.sum(X ** 2 / (1.0 - np.abs(X)), axis=1)


def _box_barrier_gradient(X):
    d = 1.0 - np.abs(X)
    # d|x|/dx taken as sign(x), which is 0 at x = 0
    return 2.0 * X / d + X ** 2 * np.sign(X) / d ** 2


def _strip_barrier(X):
    D = np.sqrt(2.0) - np.sqrt(X[:, 1] ** 2 + 1.0)
    return np.sum(X ** 2, axis=1) / D


def _strip_barrier_gradient(X):
    root = np.sqrt(X[:, 1] ** 2 + 1.0)
    D = np.sqrt(2.0) - root
    g = 2.0 * X / D[:, None]
    g[:, 1] += np.sum(X ** 2, axis=1) * (X[:, 1] / root) / D ** 2
    return g


def box_barrier(wrapper="exp"):
    return BarrierCandidate("box", _box_barrier, _box_barrier_gradient, box_level, wrapper)


def strip_barrier(wrapper="logistic"):
    return BarrierCandidate("strip", _strip_barrier, _strip_barrier_gradient, strip_level, wrapper)


BARRIERS = {"box": box_barrier, "strip": strip_barrier}


# -- analytic checks ------------------------------------------------------------

def hji_residual(game, vf, x):
    """Steady-state HJI residual of the value ``vf`` (anything with ``.gradient``).

    ``L + V'f - 1/4 (V'G + L_u) R_u^-1 (.)' + 1/4 (V'K + L_a) R_a^-1 (.)'``
    """
    X, single = _as_batch(x, game.n)
    game.safe_set.check(X)
    c, d = game.cost, game.dynamics
    g = np.atleast_2d(vf.gradient(X))
    bu = np.einsum("bi,bij->bj", g, d.control_gain(X)) + c.control_cross(X)
    ba = np.einsum("bi,bij->bj", g, d.adversary_gain(X)) + c.adversary_cross(X)
    res = (c.state_cost(X) + np.einsum("bi,bi->b", g, d.drift(X))
           - 0.25 * np.einsum("bi,bi->b", bu, spd_solve(c.control_weight(X), bu))
           + 0.25 * np.einsum("bi,bi->b", ba, spd_solve(c.adversary_weight(X), ba)))
    return _unbatch(res, single)


def closed_loop_drift(game, X, g):
    """``f + G u* + K a*`` for gradient rows ``g``."""
    d = game.dynamics
    u, a = nash_inputs(game, X, g)
    return (d.drift(X) + np.einsum("bij,bj->bi", d.control_gain(X), u)
            + np.einsum("bij,bj->bi", d.adversary_gain(X), a))


def lyapunov_decrease_margin(game, vf, ptp, x):
    """``V' (f + G u* + K a*) + (gamma/T_p)(alpha V^p + beta V^q)^r``; <= 0 where the decrease holds."""
    X, single = _as_batch(x, game.n)
    game.safe_set.check(X)
    V, g = vf.value_and_gradient(X)
    V = np.atleast_1d(V)
    g = np.atleast_2d(g)
    vdot = np.einsum("bi,bi->b", g, closed_loop_drift(game, X, g))
    return _unbatch(vdot + ptp.bound(np.maximum(V, 0.0)), single)


def inverse_state_cost(game, vf, x):
    """State cost that makes the feedback induced by ``vf`` a saddle point.

    ``u*' R_u u* - V' f - a*' R_a a*``
    """
    X, single = _as_batch(x, game.n)
    game.safe_set.check(X)
    c, d = game.cost, game.dynamics
    g = np.atleast_2d(vf.gradient(X))
    u, a = nash_inputs(game, X, g)
    out = (np.einsum("bi,bij,bj->b", u, c.control_weight(X), u)
           - np.einsum("bi,bi->b", g, d.drift(X))
           - np.einsum("bi,bij,bj->b", a, c.adversary_weight(X), a))
    return _unbatch(out, single)
