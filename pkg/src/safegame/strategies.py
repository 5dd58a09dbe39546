"""Nash feedback strategies and saddle-point checks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .game import StrategyParams, _as_batch, _unbatch, nash_inputs
from .problems import bounded_phi, unbounded_phi


@dataclass(frozen=True)
class StrategyPair:
    """Feedback maps for the minimizing controller and the maximizing adversary.

    Both take a state batch ``(B, n)`` and return ``(B, m)``.
    """

    control: Callable
    adversary: Callable

    def __call__(self, X):
        return self.control(X), self.adversary(X)


def nash_control(game, vf, x):
    """``-1/2 R_u^-1 (L_u + V'G)'`` using the gradient of ``vf``."""
    X, single = _as_batch(x, game.n)
    game.safe_set.check(X)
    u, _ = nash_inputs(game, X, np.atleast_2d(vf.gradient(X)))
    return _unbatch(u, single)


def nash_adversary(game, vf, x):
    """``+1/2 R_a^-1 (L_a + V'K)'`` using the gradient of ``vf``."""
    X, single = _as_batch(x, game.n)
    game.safe_set.check(X)
    _, a = nash_inputs(game, X, np.atleast_2d(vf.gradient(X)))
    return _unbatch(a, single)


def feedback_pair(game, vf):
    """Strategy pair induced by any value with a ``gradient`` method (exact or learned)."""
    def both(X):
        return nash_inputs(game, X, np.atleast_2d(vf.gradient(X)))

    return StrategyPair(lambda X: both(X)[0], lambda X: both(X)[1])


def closed_form_pair(example, gamma1=0.5, gamma2=1.5):
    try:
        StrategyParams(gamma1, gamma2)
    except ConfigurationError:
        raise ConfigurationError(
            f"closed-form strategies need 0 < gamma1 < 1 < gamma2, got ({gamma1}, {gamma2})") from None
    phi = {"bounded": bounded_phi, "unbounded": unbounded_phi}.get(example)
    if phi is None:
        raise ConfigurationError(f"no closed-form strategies for example {example!r}")
    return StrategyPair(lambda X: -2.0 * phi(X, gamma1, gamma2),
                        lambda X: phi(X, gamma1, gamma2))


def saddle_gap(game, vf, x, u, a):
    """``(H(u*, a) - H(u*, a*), H(u, a*) - H(u*, a*))`` with costate ``V'(x)``.

    At a saddle point the first entry is <= 0 and the second >= 0.  Only the
    input-dependent part of ``H`` is differenced, so the large common terms
    ``L + V'f`` near the boundary do not cancel in floating point.
    """
    X, single = _as_batch(x, game.n)
    U, _ = _as_batch(u)
    A, _ = _as_batch(a)
    game.safe_set.check(X)
    c, d = game.cost, game.dynamics
    lam = np.atleast_2d(vf.gradient(X))
    us, as_ = nash_inputs(game, X, lam)
    bu = c.control_cross(X) + np.einsum("bi,bij->bj", lam, d.control_gain(X))
    ba = c.adversary_cross(X) + np.einsum("bi,bij->bj", lam, d.adversary_gain(X))
    Ru, Ra = c.control_weight(X), c.adversary_weight(X)

    def quad(R, v):
        return np.einsum("bi,bij,bj->b", v, R, v)

    gap_a = np.einsum("bi,bi->b", ba, A - as_) - quad(Ra, A) + quad(Ra, as_)
    gap_u = np.einsum("bi,bi->b", bu, U - us) + quad(Ru, U) - quad(Ru, us)
    return _unbatch(gap_a, single), _unbatch(gap_u, single)
