"""Analytic check suite for a game with a known value function."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .barrier import hji_residual, lyapunov_decrease_margin
from .errors import UnsupportedOperation
from .game import hamiltonian, nash_inputs
from .strategies import closed_form_pair, saddle_gap
from .trainer import sample_collocation


@dataclass(frozen=True)
class CheckResult:
    name: str
    worst: float
    tol: float
    worst_point: tuple
    passed: bool

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return (f"{tag} {self.name}: worst {self.worst:.3e} (tol {self.tol:g}) "
                f"at x={list(map(float, self.worst_point))}")


def _check(name, values, X, tol, upper=True):
    """``upper`` checks ``values <= tol``; otherwise ``|values| <= tol``."""
    v = values if upper else np.abs(values)
    i = int(np.argmax(v))
    return CheckResult(name, float(v[i]), tol, tuple(X[i]), bool(v[i] <= tol))


def exact_suite(problem, n_points=10_000, n_saddle=100_000, seed=0, margin=0.01,
                input_box=10.0, tols=None):
    """Run every analytic check on ``problem`` and return a list of :class:`CheckResult`.

    Checks: weight definiteness (raises), HJI residual, saddle inequalities,
    saddle gaps against their quadratic forms, the Lyapunov decrease
    condition, and (for the built-in examples) closed-form vs. general
    strategy agreement.
    """
    if problem.exact is None:
        raise UnsupportedOperation(f"example {problem.name!r} has no known value function")
    tol = {"hji": 1e-8, "saddle": 1e-9, "gap_form": 1e-10, "decrease": 1e-10, "closed_form": 1e-9}
    tol.update(tols or {})
    game, vf = problem.game, problem.exact
    rng = np.random.default_rng(seed)
    X = sample_collocation(game.safe_set, n_points, margin, seed).points
    game.validate_weights(X)
    results = [_check("hji_residual", hji_residual(game, vf, X), X, tol["hji"], upper=False)]

    Xs = sample_collocation(game.safe_set, n_saddle, margin, seed + 1).points
    d = game.dynamics
    U = rng.uniform(-input_box, input_box, (n_saddle, d.m_u))
    A = rng.uniform(-input_box, input_box, (n_saddle, d.m_a))
    lam = vf.gradient(Xs)
    us, as_ = nash_inputs(game, Xs, lam)
    h_star = hamiltonian(game, Xs, us, as_, lam)
    results.append(_check("adversary_deviation_gain",
                          hamiltonian(game, Xs, us, A, lam) - h_star, Xs, tol["saddle"]))
    results.append(_check("control_deviation_gain",
                          h_star - hamiltonian(game, Xs, U, as_, lam), Xs, tol["saddle"]))
    gap_a, gap_u = saddle_gap(game, vf, Xs, U, A)
    du, da = U - us, A - as_
    form_a = -np.einsum("bi,bij,bj->b", da, game.cost.adversary_weight(Xs), da)
    form_u = np.einsum("bi,bij,bj->b", du, game.cost.control_weight(Xs), du)
    err = np.maximum(np.abs(gap_a - form_a), np.abs(gap_u - form_u))
    results.append(_check("saddle_gap_quadratic_form", err, Xs, tol["gap_form"]))

    results.append(_check("decrease_condition", lyapunov_decrease_margin(game, vf, problem.ptp, X),
                          X, tol["decrease"]))
    if problem.name in ("bounded", "unbounded"):
        sp = problem.strategy_params
        pair = closed_form_pair(problem.name, sp.gamma1, sp.gamma2)
        uc, ac = pair(X)
        ug, ag = nash_inputs(game, X, vf.gradient(X))
        diff = np.maximum(np.max(np.abs(uc - ug), axis=1), np.max(np.abs(ac - ag), axis=1))
        results.append(_check("closed_form_strategies", diff, X, tol["closed_form"], upper=False))
    return results
