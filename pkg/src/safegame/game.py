"""Affine zero-sum game: dynamics, running cost, safe set, Hamiltonian.

All model callables work on batches: a state batch ``X`` has shape
``(B, n)``; drift returns ``(B, n)``, gains return ``(B, n, m)``, weights
return ``(B, m, m)`` and cross terms ``(B, m)``.  The public operations
accept a single point ``(n,)`` or a batch and answer in kind.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DomainError, NumericError


def signed_power(y, eta):
    """Componentwise ``|y|**eta * sign(y)``."""
    if eta <= 0:
        raise ConfigurationError(f"signed_power needs eta > 0, got {eta}")
    y = np.asarray(y, dtype=float)
    return np.sign(y) * np.abs(y) ** eta


def gamma_constant(alpha, beta, p, q, r):
    """Rate constant of the predefined-time Lyapunov inequality.

    With ``a = (1 - r p)/(q - p)`` and ``b = (r q - 1)/(q - p)``::

        Gamma(a) Gamma(b) / (alpha**r Gamma(r) (q - p)) * (alpha/beta)**a

    This equals the integral of ``1/(alpha V^p + beta V^q)^r`` over
    ``(0, inf)``, i.e. the worst-case settling time when ``gamma/T_p = 1``.
    """
    for name, v in (("alpha", alpha), ("beta", beta), ("p", p), ("q", q), ("r", r)):
        if not v > 0:
            raise DomainError(f"{name} must be positive, got {v}")
    if not p * r < 1:
        raise DomainError(f"need p*r < 1, got p*r = {p * r}")
    if not q * r > 1:
        raise DomainError(f"need q*r > 1, got q*r = {q * r}")
    a = (1 - r * p) / (q - p)
    b = (r * q - 1) / (q - p)
    return (math.gamma(a) * math.gamma(b) / (alpha ** r * math.gamma(r) * (q - p))
            * (alpha / beta) ** a)


@dataclass(frozen=True)
class PredefinedTimeParams:
    """Exponents and gains of ``Vdot <= -(gamma/T_p)(alpha V^p + beta V^q)^r``.

    ``T_p`` defaults to ``gamma`` itself, which makes the rate factor one.
    """

    alpha: float
    beta: float
    p: float
    q: float
    r: float = 1.0
    T_p: float | None = None
    gamma: float = field(init=False)

    def __post_init__(self):
        try:
            g = gamma_constant(self.alpha, self.beta, self.p, self.q, self.r)
        except DomainError as exc:
            raise ConfigurationError(str(exc)) from None
        object.__setattr__(self, "gamma", g)
        if self.T_p is None:
            object.__setattr__(self, "T_p", g)
        elif not self.T_p > 0:
            raise ConfigurationError(f"T_p must be positive, got {self.T_p}")

    @classmethod
    def from_strategy_exponents(cls, gamma1, gamma2, T_p=None):
        """Parameters certified by the closed-form examples for exponents (gamma1, gamma2)."""
        return cls(alpha=2.0 ** ((gamma1 + 1) / 2), beta=2.0,
                   p=(gamma1 + 1) / 2, q=(gamma2 + 1) / 2, r=1.0, T_p=T_p)

    @property
    def rate(self):
        return self.gamma / self.T_p

    def bound(self, V):
        """``(gamma/T_p)(alpha V^p + beta V^q)^r`` for ``V >= 0``."""
        V = np.asarray(V, dtype=float)
        return self.rate * (self.alpha * V ** self.p + self.beta * V ** self.q) ** self.r

    def bound_derivative(self, V):
        V = np.asarray(V, dtype=float)
        inner = self.alpha * V ** self.p + self.beta * V ** self.q
        dinner = self.alpha * self.p * V ** (self.p - 1) + self.beta * self.q * V ** (self.q - 1)
        return self.rate * self.r * inner ** (self.r - 1) * dinner


@dataclass(frozen=True)
class StrategyParams:
    """Exponents of the signed-power feedback; used for both players."""

    gamma1: float = 0.5
    gamma2: float = 1.5

    def __post_init__(self):
        if not 0 < self.gamma1 < 1:
            raise ConfigurationError(f"gamma1 must lie in (0, 1), got {self.gamma1}")
        if not self.gamma2 > 1:
            raise ConfigurationError(f"gamma2 must exceed 1, got {self.gamma2}")

    @property
    def control_params(self):
        return np.array([self.gamma1, self.gamma2])

    @property
    def adversary_params(self):
        return np.array([self.gamma1, self.gamma2])


@dataclass(frozen=True)
class AffineDynamics:
    """``xdot = f(x) + G(x) u + K(x) a``."""

    drift: Callable
    control_gain: Callable
    adversary_gain: Callable
    n: int
    m_u: int
    m_a: int
    system_params: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True)
class RunningCost:
    """``L(x) + L_u(x) u + L_a(x) a + u'R_u(x)u - a'R_a(x)a``."""

    state_cost: Callable
    control_cross: Callable
    adversary_cross: Callable
    control_weight: Callable
    adversary_weight: Callable


@dataclass(frozen=True)
class SafeSet:
    """``S = {x : level(x) > 0}`` plus a sampling box covering (part of) S."""

    level: Callable
    kind: str
    box_low: np.ndarray
    box_high: np.ndarray

    def __post_init__(self):
        if self.kind not in ("bounded", "unbounded"):
            raise ConfigurationError(f"unknown safe-set kind {self.kind!r}")
        n = len(self.box_low)
        if not self.level(np.zeros((1, n)))[0] > 0:
            raise ConfigurationError("the origin must lie strictly inside the safe set")

    def contains(self, X):
        Xb, single = _as_batch(X)
        return _unbatch(self.level(Xb) > 0, single)

    def check(self, X, margin=0.0):
        """Raise DomainError unless every row satisfies ``level > margin``."""
        Xb, _ = _as_batch(X)
        s = self.level(Xb)
        bad = ~(s > margin)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise DomainError(f"state {Xb[i].tolist()} is outside the safe set "
                              f"(level {s[i]:.3g}, required > {margin})")
        return s


@dataclass(frozen=True)
class Game:
    dynamics: AffineDynamics
    cost: RunningCost
    safe_set: SafeSet

    @property
    def n(self):
        return self.dynamics.n

    def validate_weights(self, X):
        """Check that both weight matrices are symmetric positive definite at ``X``."""
        Xb, _ = _as_batch(X)
        for name, fn in (("R_u", self.cost.control_weight), ("R_a", self.cost.adversary_weight)):
            R = fn(Xb)
            if not np.allclose(R, np.swapaxes(R, -1, -2)):
                raise ConfigurationError(f"{name}(x) is not symmetric")
            try:
                np.linalg.cholesky(R)
            except np.linalg.LinAlgError:
                raise ConfigurationError(f"{name}(x) is not positive definite") from None


def _as_batch(x, width=None):
    """Return ``(2-D array, was_single)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
        single = True
    elif x.ndim == 2:
        single = False
    else:
        raise ConfigurationError(f"expected a vector or a batch of vectors, got shape {x.shape}")
    if width is not None and x.shape[1] != width:
        raise ConfigurationError(f"expected dimension {width}, got {x.shape[1]}")
    return x, single


def _unbatch(v, single):
    return v[0] if single else v


def spd_solve(R, b):
    """Solve ``R y = b`` row-wise for SPD ``R`` of shape (B, m, m)."""
    try:
        C = np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise NumericError("weight matrix is not positive definite") from None
    y = np.linalg.solve(C, b[..., None])
    return np.linalg.solve(np.swapaxes(C, -1, -2), y)[..., 0]


def spd_inverse(R):
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise NumericError("weight matrix is not positive definite") from None
    return np.linalg.inv(R)


def _inputs(game, x, u, a):
    d = game.dynamics
    X, single = _as_batch(x, d.n)
    U, _ = _as_batch(u, d.m_u)
    A, _ = _as_batch(a, d.m_a)
    if not (X.shape[0] == U.shape[0] == A.shape[0]):
        raise ConfigurationError("state and input batches have different lengths")
    return X, U, A, single


def rhs(game, x, u, a):
    """``f(x) + G(x) u + K(x) a``."""
    d = game.dynamics
    X, U, A, single = _inputs(game, x, u, a)
    out = (d.drift(X) + np.einsum("bij,bj->bi", d.control_gain(X), U)
           + np.einsum("bij,bj->bi", d.adversary_gain(X), A))
    return _unbatch(out, single)


def running_cost(game, x, u, a):
    c = game.cost
    X, U, A, single = _inputs(game, x, u, a)
    game.safe_set.check(X)
    out = (c.state_cost(X) + np.einsum("bi,bi->b", c.control_cross(X), U)
           + np.einsum("bi,bi->b", c.adversary_cross(X), A)
           + np.einsum("bi,bij,bj->b", U, c.control_weight(X), U)
           - np.einsum("bi,bij,bj->b", A, c.adversary_weight(X), A))
    return _unbatch(out, single)


def hamiltonian(game, x, u, a, lam):
    """``r(x, u, a) + lam . F(x, u, a)``."""
    L, _ = _as_batch(lam, game.n)
    X, _ = _as_batch(x, game.n)
    if L.shape[0] != X.shape[0]:
        raise ConfigurationError("costate and state batches have different lengths")
    r = np.atleast_1d(running_cost(game, x, u, a))
    F = np.atleast_2d(rhs(game, x, u, a))
    out = r + np.einsum("bi,bi->b", L, F)
    return out[0] if np.ndim(x) == 1 else out


def nash_inputs(game, X, Gx):
    """Saddle-point inputs for a batch of value gradients ``Gx`` (B, n)."""
    c, d = game.cost, game.dynamics
    bu = c.control_cross(X) + np.einsum("bi,bij->bj", Gx, d.control_gain(X))
    ba = c.adversary_cross(X) + np.einsum("bi,bij->bj", Gx, d.adversary_gain(X))
    u = -0.5 * spd_solve(c.control_weight(X), bu)
    a = 0.5 * spd_solve(c.adversary_weight(X), ba)
    return u, a
