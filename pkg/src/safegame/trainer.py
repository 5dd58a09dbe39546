"""Constrained physics-informed training of the value surrogate.

Minimizes the summed squared HJI residual over collocation points subject to
the predefined-time decrease constraint ``l(x, w) <= 0`` at every point, by
an augmented-Lagrangian outer loop around a limited-memory quasi-Newton
inner solve.

For fixed ``x`` both the HJI residual and the constraint are quadratic in
the value gradient ``g``::

    rho(x, g) = c0 + g.d + 1/2 g M g'
    l(x, V, g) = g.d + g M g' + (gamma/T_p)(alpha V^p + beta V^q)^r

with ``d = f - 1/2 G R_u^-1 L_u' + 1/2 K R_a^-1 L_a'``,
``M = -1/2 G R_u^-1 G' + 1/2 K R_a^-1 K'`` and
``c0 = L - 1/4 L_u R_u^-1 L_u' + 1/4 L_a R_a^-1 L_a'``; these are computed
once per collocation set.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigurationError, NumericError
from .game import _as_batch, _unbatch, spd_inverse

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("outer_iter", "E", "max_l", "violated_fraction", "inner_iters", "inner_status", "mu")


@dataclass(frozen=True)
class CollocationSet:
    points: np.ndarray
    margin: float

    def __len__(self):
        return len(self.points)


def sample_collocation(safe_set, M, margin=0.01, seed=0):
    """Uniform draws from the sampling box, kept when ``level(x) >= margin``."""
    if not margin > 0:
        raise ConfigurationError(f"collocation margin must be positive, got {margin}")
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(safe_set.box_low, float), np.asarray(safe_set.box_high, float)
    chunks, have = [], 0
    while have < M:
        X = rng.uniform(lo, hi, size=(max(2 * (M - have), 64), lo.size))
        X = X[safe_set.level(X) >= margin]
        chunks.append(X)
        have += len(X)
    return CollocationSet(np.concatenate(chunks)[:M], margin)


@dataclass(frozen=True)
class PointTerms:
    """Per-point coefficients of the residual and constraint as quadratics in the gradient."""

    c0: np.ndarray
    d: np.ndarray
    M: np.ndarray

    @classmethod
    def from_game(cls, game, X):
        X, _ = _as_batch(X, game.n)
        game.safe_set.check(X)
        c, dyn = game.cost, game.dynamics
        Ru_inv = spd_inverse(c.control_weight(X))
        Ra_inv = spd_inverse(c.adversary_weight(X))
        G, K = dyn.control_gain(X), dyn.adversary_gain(X)
        Lu, La = c.control_cross(X), c.adversary_cross(X)
        GRu = np.matmul(G, Ru_inv)
        KRa = np.matmul(K, Ra_inv)
        d = (dyn.drift(X) - 0.5 * np.einsum("bij,bj->bi", GRu, Lu)
             + 0.5 * np.einsum("bij,bj->bi", KRa, La))
        M = (-0.5 * np.matmul(GRu, np.swapaxes(G, 1, 2))
             + 0.5 * np.matmul(KRa, np.swapaxes(K, 1, 2)))
        c0 = (c.state_cost(X) - 0.25 * np.einsum("bi,bij,bj->b", Lu, Ru_inv, Lu)
              + 0.25 * np.einsum("bi,bij,bj->b", La, Ra_inv, La))
        return cls(c0, d, M)

    def residual(self, g):
        Mg = np.einsum("bij,bj->bi", self.M, g)
        return self.c0 + np.einsum("bi,bi->b", g, self.d) + 0.5 * np.einsum("bi,bi->b", g, Mg), Mg

    def constraint(self, V, g, ptp, floor=1e-12):
        Mg = np.einsum("bij,bj->bi", self.M, g)
        # the floor tames the V^p slope near the origin; V = 0 itself stays exact
        bound = np.where(V > 0, ptp.bound(np.maximum(V, floor)), 0.0)
        return np.einsum("bi,bi->b", g, self.d) + np.einsum("bi,bi->b", g, Mg) + bound, Mg


def _terms(game, colset):
    return PointTerms.from_game(game, colset.points)


def hji_loss(surrogate, game, colset, w=None, terms=None):
    """Sum over collocation points of the squared steady-state HJI residual."""
    terms = terms or _terms(game, colset)
    _, G = surrogate.value_and_gradient(colset.points, w)
    rho, _ = terms.residual(G)
    loss = float(np.sum(rho ** 2))
    if not np.isfinite(loss):
        i = int(np.argmax(~np.isfinite(rho)))
        raise NumericError(f"HJI residual overflowed at {colset.points[i].tolist()}")
    return loss


def constraint(surrogate, game, ptp, x, w=None, floor=1e-12):
    """Decrease-condition value ``l(x, w)``; nonpositive where the condition holds."""
    X, single = _as_batch(x, game.n)
    terms = PointTerms.from_game(game, X)
    V, G = surrogate.value_and_gradient(X, w)
    return _unbatch(terms.constraint(V, G, ptp, floor)[0], single)


@dataclass(frozen=True)
class Multipliers:
    mu: float
    lam: np.ndarray
    growth: float
    outer_iter: int = 0
    mu0: float | None = None

    @classmethod
    def initial(cls, M, mu0, growth):
        if not mu0 > 0:
            raise ConfigurationError(f"mu0 must be positive, got {mu0}")
        if not growth > 1:
            raise ConfigurationError(f"growth must exceed 1, got {growth}")
        return cls(mu0, np.zeros(M), growth, 0, mu0)


def penalty_active(l, lam):
    return (l >= 0) | (lam > 0)


def penalty(l, mult, active=None):
    """``sum(mu 1{l >= 0 or lam > 0} l^2 + lam l)``."""
    l = np.asarray(l, dtype=float)
    if active is None:
        active = penalty_active(l, mult.lam)
    return float(np.sum(mult.mu * active * l ** 2 + mult.lam * l))


def augmented_loss(surrogate, game, ptp, colset, w, mult, active=None, terms=None):
    """``E(w) + sum(mu 1{l >= 0 or lam > 0} l^2 + lam l)``.

    ``active`` overrides the indicator (used when it is frozen at the previous iterate).
    """
    terms = terms or _terms(game, colset)
    V, G = surrogate.value_and_gradient(colset.points, w)
    rho, _ = terms.residual(G)
    l, _ = terms.constraint(V, G, ptp)
    return float(np.sum(rho ** 2)) + penalty(l, mult, active)


def update_multipliers(mult, l):
    """``mu <- growth mu``; ``lam <- max(0, lam + 2 mu_prev l)`` pointwise."""
    lam = np.maximum(0.0, mult.lam + 2.0 * mult.mu * np.asarray(l, dtype=float))
    return replace(mult, mu=mult.growth * mult.mu, lam=lam, outer_iter=mult.outer_iter + 1)


@dataclass
class InnerResult:
    w: np.ndarray
    fun: float
    grad_norm: float
    iterations: int
    converged: bool
    status: str


def inner_minimize(fun_and_grad, w0, memory=10, max_iter=500, gtol=1e-9, ftol=1e-15):
    """L-BFGS with a strong-Wolfe line search (scipy's L-BFGS-B without bounds).

    ``converged`` is True only when ``|grad|_inf <= gtol``; a stalled line
    search returns the best point found with ``status == "line_search"``.
    """
    w0 = np.asarray(w0, dtype=float)
    if w0.size == 0:
        f, g = fun_and_grad(w0)
        return InnerResult(w0, float(f), 0.0, 0, True, "converged")
    res = minimize(fun_and_grad, w0, jac=True, method="L-BFGS-B",
                   options={"maxcor": memory, "maxiter": max_iter, "gtol": gtol,
                            "ftol": ftol, "maxfun": 2 * max_iter + 20, "maxls": 40})
    f, g = fun_and_grad(res.x)
    gnorm = float(np.max(np.abs(g)))
    converged = gnorm <= gtol
    if converged:
        status = "converged"
    elif res.nit >= max_iter or res.nfev >= 2 * max_iter + 20:
        status = "max_iter"
    elif "ABNORMAL" in str(res.message) or "LNSRCH" in str(res.message):
        status = "line_search"
    else:
        # relative decrease of f fell below ftol
        status = "stalled"
    return InnerResult(res.x, float(f), gnorm, int(res.nit), converged, status)


@dataclass(frozen=True)
class TrainConfig:
    mu0: float = 1e-4
    growth: float = 2.0
    outer_iterations: int = 10
    memory: int = 10
    max_inner_iters: int = 500
    gtol: float = 1e-9
    collocation_size: int = 2000
    margin: float = 0.01
    seed: int = 0
    indicator: str = "current"
    violation_tol: float = 1e-3

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ConfigurationError("mu0 must be positive")
        if not self.growth > 1:
            raise ConfigurationError("growth must exceed 1")
        if self.outer_iterations < 0:
            raise ConfigurationError("outer_iterations must be nonnegative")
        if self.indicator not in ("current", "previous"):
            raise ConfigurationError("indicator must be 'current' or 'previous'")
        if self.collocation_size < 1:
            raise ConfigurationError("collocation_size must be positive")
        if not self.margin > 0:
            raise ConfigurationError("margin must be positive")
        if self.memory < 1 or self.max_inner_iters < 1:
            raise ConfigurationError("memory and max_inner_iters must be positive")


class AugmentedObjective:
    """Value and parameter gradient of the subproblem loss with frozen multipliers."""

    def __init__(self, surrogate, game, ptp, colset, mult, active=None, terms=None):
        self.surrogate = surrogate
        self.ptp = ptp
        self.X = colset.points
        self.terms = terms or _terms(game, colset)
        self.mult = mult
        self.active = active

    def parts(self, w):
        V, G, pullback = self.surrogate.evaluate(self.X, w)
        rho, Mg = self.terms.residual(G)
        l, _ = self.terms.constraint(V, G, self.ptp)
        return V, G, rho, Mg, l, pullback

    def __call__(self, w):
        with np.errstate(over="ignore", invalid="ignore"):
            V, G, rho, Mg, l, pullback = self.parts(w)
            mu, lam = self.mult.mu, self.mult.lam
            active = penalty_active(l, lam) if self.active is None else self.active
            f = np.sum(rho ** 2) + np.sum(mu * active * l ** 2 + lam * l)
            if not np.isfinite(f):
                return np.inf, np.zeros_like(w)
            dl = 2.0 * mu * active * l + lam
            d = self.terms.d
            Gbar = (2.0 * rho)[:, None] * (d + Mg) + dl[:, None] * (d + 2.0 * Mg)
            Vbar = np.where(V > 1e-12, dl * self.ptp.bound_derivative(np.maximum(V, 1e-12)), 0.0)
            grad = pullback(Vbar, Gbar)
        if not np.all(np.isfinite(grad)):
            return np.inf, np.zeros_like(w)
        return float(f), grad


@dataclass
class TrainReport:
    rows: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def to_csv(self):
        lines = [",".join(REPORT_COLUMNS)]
        for r in self.rows:
            lines.append(",".join(_fmt(r[c]) for c in REPORT_COLUMNS))
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _summary(surrogate, terms, colset, w, ptp, tol):
    V, G = surrogate.value_and_gradient(colset.points, w)
    rho, _ = terms.residual(G)
    l, _ = terms.constraint(V, G, ptp)
    return float(np.sum(rho ** 2)), l, float(np.mean(l > tol))


def train(problem, surrogate, config: TrainConfig, w0=None, checkpoint_dir=None, on_record=None):
    """Augmented-Lagrangian training loop.  Returns ``(w, report, colset)``.

    ``on_record(report)`` is called after every row so callers can persist
    partial results before a later outer iteration fails.
    """
    from .valuenet import save_checkpoint

    game, ptp = problem.game, problem.ptp
    colset = sample_collocation(game.safe_set, config.collocation_size, config.margin, config.seed)
    terms = _terms(game, colset)
    w = surrogate.init_params() if w0 is None else np.asarray(w0, dtype=float).copy()
    mult = Multipliers.initial(len(colset), config.mu0, config.growth)
    report = TrainReport(settings={
        "collocation": "uniform on box, rejected below margin",
        "box_low": list(map(float, game.safe_set.box_low)),
        "box_high": list(map(float, game.safe_set.box_high)),
        "margin": config.margin, "indicator": config.indicator})

    def record(k, w, inner_iters, status, elapsed):
        E, l, frac = _summary(surrogate, terms, colset, w, ptp, config.violation_tol)
        report.rows.append({"outer_iter": k, "E": E, "max_l": float(np.max(l)),
                            "violated_fraction": frac, "inner_iters": inner_iters,
                            "inner_status": status, "mu": mult.mu})
        report.wall_times.append(elapsed)
        if checkpoint_dir is not None and hasattr(surrogate, "net"):
            save_checkpoint(Path(checkpoint_dir) / f"checkpoint_{k:03d}.txt", surrogate, w, k)
        log.info("outer %d: E=%.6g max_l=%.3g violated=%.4f inner=%s (%s)",
                 k, E, np.max(l), frac, inner_iters, status)
        if on_record is not None:
            on_record(report)
        return l

    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    l_prev = record(0, w, 0, "initial", 0.0)
    for k in range(1, config.outer_iterations + 1):
        active = penalty_active(l_prev, mult.lam) if config.indicator == "previous" else None
        objective = AugmentedObjective(surrogate, game, ptp, colset, mult, active, terms)
        res = inner_minimize(objective, w, config.memory, config.max_inner_iters, config.gtol)
        if np.all(np.isfinite(res.w)):
            w = res.w
        V, G = surrogate.value_and_gradient(colset.points, w)
        l_new, _ = terms.constraint(V, G, ptp)
        # "previous" replays the literal ordering: multipliers see l at w_{k-1}
        mult = update_multipliers(mult, l_prev if config.indicator == "previous" else l_new)
        l_prev = record(k, w, res.iterations, res.status, time.perf_counter() - t0)
    return w, report, colset
