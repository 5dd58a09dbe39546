"""Closed-loop simulation, safety/settling checks, and approximation metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConfigurationError, DomainError, NumericError, SafetyViolation
from .game import _as_batch, nash_inputs


@dataclass(frozen=True)
class SimConfig:
    step: float = 1e-3
    horizon: float | None = None
    stop_norm: float = 1e-8
    boundary_guard: float = 1e-6

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigurationError("step must be positive")
        if self.horizon is not None and not self.horizon > 0:
            raise ConfigurationError("horizon must be positive")
        if not self.stop_norm >= 0:
            raise ConfigurationError("stop_norm must be nonnegative")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    adversaries: np.ndarray
    cost_samples: np.ndarray
    levels: np.ndarray
    settled_at: float | None
    horizon: float
    status: str = "ok"

    @property
    def min_safety_level(self):
        return float(np.min(self.levels))

    @property
    def final_norm(self):
        return float(np.linalg.norm(self.states[-1]))

    @property
    def complete(self):
        return self.status == "ok" and math.isclose(self.times[-1], self.horizon,
                                                     rel_tol=0, abs_tol=1e-12)


def _time_grid(horizon, step):
    n = int(math.ceil(horizon / step - 1e-9))
    t = np.arange(n + 1) * step
    t[-1] = horizon
    return t


def _running_cost_rows(game, X, U, A):
    c = game.cost
    return (c.state_cost(X) + np.einsum("bi,bi->b", c.control_cross(X), U)
            + np.einsum("bi,bi->b", c.adversary_cross(X), A)
            + np.einsum("bi,bij,bj->b", U, c.control_weight(X), U)
            - np.einsum("bi,bij,bj->b", A, c.adversary_weight(X), A))


def integrate_batch(game, pair, X0, cfg=SimConfig(), horizon=None):
    """RK4 on ``xdot = f + G u(x) + K a(x)`` for every initial state in ``X0``.

    Rows are advanced together but frozen independently: a row whose norm
    drops to ``stop_norm`` is set to the origin for the rest of the run; a
    row whose state (or an RK stage) leaves ``level > boundary_guard`` stops
    with status ``"safety_violation"``, and non-finite values stop it with
    ``"numeric"``.  Returns one :class:`Trajectory` per row.
    """
    X0, _ = _as_batch(X0, game.n)
    T = horizon or cfg.horizon
    if T is None:
        raise ConfigurationError("no simulation horizon given")
    dyn, safe = game.dynamics, game.safe_set
    times = _time_grid(T, cfg.step)
    B, n, N = X0.shape[0], game.n, len(times)
    states = np.zeros((N, B, n))
    controls = np.zeros((N, B, dyn.m_u))
    advs = np.zeros((N, B, dyn.m_a))
    costs = np.zeros((N, B))
    levels = np.zeros((N, B))
    status = np.array(["ok"] * B, dtype=object)
    last = np.full(B, N - 1)
    settled_at = np.full(B, np.nan)

    lev0 = safe.level(X0)
    for i in np.flatnonzero(~(lev0 > cfg.boundary_guard)):
        status[i] = "outside"
        last[i] = 0
    X = X0.copy()
    running = status == "ok"
    settled = running & (np.linalg.norm(X, axis=1) <= cfg.stop_norm)
    X[settled] = 0.0
    settled_at[settled] = 0.0

    def field_(Xs):
        U, A = pair(Xs)
        F = (dyn.drift(Xs) + np.einsum("bij,bj->bi", dyn.control_gain(Xs), U)
             + np.einsum("bij,bj->bi", dyn.adversary_gain(Xs), A))
        return F, U, A

    def record(k, idx):
        if idx.size == 0:
            return
        Xs = X[idx]
        U, A = pair(Xs)
        states[k, idx] = Xs
        controls[k, idx] = U
        advs[k, idx] = A
        costs[k, idx] = _running_cost_rows(game, Xs, U, A)
        levels[k, idx] = safe.level(Xs)

    zero_lev = safe.level(np.zeros((1, n)))[0]
    for k in range(N):
        moving = np.flatnonzero(running & ~settled)
        frozen = np.flatnonzero(running & settled)
        with np.errstate(invalid="ignore", over="ignore"):
            record(k, moving)
        levels[k, frozen] = zero_lev
        if k == N - 1:
            break
        h = times[k + 1] - times[k]
        if moving.size:
            Xm = X[moving]
            ok = np.ones(moving.size, dtype=bool)
            finite = np.ones(moving.size, dtype=bool)
            stages = []
            with np.errstate(invalid="ignore", over="ignore"):
                for coef in (0.0, 0.5, 0.5, 1.0):
                    Xs = Xm if coef == 0.0 else Xm + coef * h * stages[-1]
                    fin = np.all(np.isfinite(Xs), axis=1)
                    finite &= fin
                    inside = np.zeros(moving.size, dtype=bool)
                    inside[fin] = safe.level(Xs[fin]) > cfg.boundary_guard
                    ok &= inside
                    F = np.zeros_like(Xs)
                    if np.any(ok):
                        F[ok] = field_(Xs[ok])[0]
                    stages.append(F)
                Xn = Xm + h / 6.0 * (stages[0] + 2 * stages[1] + 2 * stages[2] + stages[3])
            finite &= np.all(np.isfinite(Xn), axis=1)
            inside_next = np.zeros(moving.size, dtype=bool)
            inside_next[finite] = safe.level(Xn[finite]) > cfg.boundary_guard
            good = ok & finite & inside_next
            for j in np.flatnonzero(~good):
                i = moving[j]
                status[i] = "numeric" if not finite[j] else "safety_violation"
                last[i] = k
                running[i] = False
            X[moving[good]] = Xn[good]
            newly = moving[good][np.linalg.norm(Xn[good], axis=1) <= cfg.stop_norm]
            X[newly] = 0.0
            settled[newly] = True
            settled_at[newly] = times[k + 1]

    out = []
    for i in range(B):
        m = last[i] + 1
        out.append(Trajectory(
            times=times[:m].copy(), states=states[:m, i].copy(),
            controls=controls[:m, i].copy(), adversaries=advs[:m, i].copy(),
            cost_samples=costs[:m, i].copy(),
            levels=levels[:m, i].copy() if status[i] != "outside" else lev0[i:i + 1].copy(),
            settled_at=None if np.isnan(settled_at[i]) else float(settled_at[i]),
            horizon=T, status=str(status[i])))
        if status[i] == "outside":
            out[-1].states[0] = X0[i]
    return out


def integrate(game, pair, x0, cfg=SimConfig(), horizon=None):
    """Single trajectory; raises on safety violation or non-finite state."""
    traj = integrate_batch(game, pair, np.atleast_2d(x0), cfg, horizon)[0]
    if traj.status == "outside":
        raise DomainError(f"initial state {np.asarray(x0).tolist()} is not inside the safe set")
    if traj.status == "safety_violation":
        raise SafetyViolation(
            f"trajectory from {np.asarray(x0).tolist()} crossed the boundary guard "
            f"near t={traj.times[-1]:.6g}", traj)
    if traj.status == "numeric":
        raise NumericError(f"non-finite state near t={traj.times[-1]:.6g}")
    return traj


def accumulate_cost(traj, horizon=None):
    """Trapezoidal integral of the recorded running cost over ``[0, horizon]``."""
    if not traj.complete:
        raise NumericError("cost needs a trajectory that reached its horizon without aborting")
    T = traj.horizon if horizon is None else horizon
    m = traj.times <= T + 1e-12
    return float(trapezoid(traj.cost_samples[m], traj.times[m]))


def settling_time(traj, eps):
    """First sample time after which ``|x(t)| <= eps`` holds for the rest of the record."""
    norms = np.linalg.norm(traj.states, axis=1)
    outside = np.flatnonzero(norms > eps)
    if outside.size == 0:
        return float(traj.times[0])
    k = outside[-1] + 1
    return None if k >= len(traj.times) else float(traj.times[k])


def sae_scalar(vhat, v):
    """``|vhat - v| / (|vhat| + |v|)``, zero when both are zero (elementwise on arrays)."""
    vhat = np.asarray(vhat, dtype=float)
    v = np.asarray(v, dtype=float)
    den = np.abs(vhat) + np.abs(v)
    out = np.divide(np.abs(vhat - v), den, out=np.zeros(np.broadcast(vhat, v).shape), where=den > 0)
    return out if out.ndim else float(out)


def sae_vector(uhat, u):
    """l1 form of :func:`sae_scalar` along the last axis."""
    uhat = np.asarray(uhat, dtype=float)
    u = np.asarray(u, dtype=float)
    num = np.sum(np.abs(uhat - u), axis=-1)
    den = np.sum(np.abs(uhat), axis=-1) + np.sum(np.abs(u), axis=-1)
    out = np.divide(num, den, out=np.zeros(np.shape(num)), where=den > 0)
    return out if np.ndim(out) else float(out)


def evaluation_grid(safe_set, per_axis=81, margin=0.01):
    """Regular grid over the sampling box, keeping points with ``level >= margin``."""
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(safe_set.box_low, safe_set.box_high)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    return X[safe_set.level(X) >= margin]


def evaluate_surrogate(game, approx, exact, grid):
    """Pointwise SAE of value, control, and adversary between two value functions."""
    X, _ = _as_batch(grid, game.n)
    Vh, Gh = approx.value_and_gradient(X)
    V, G = exact.value_and_gradient(X)
    uh, ah = nash_inputs(game, X, np.atleast_2d(Gh))
    u, a = nash_inputs(game, X, np.atleast_2d(G))
    table = {"points": X, "value_sae": sae_scalar(Vh, V),
             "control_sae": sae_vector(uh, u), "adversary_sae": sae_vector(ah, a)}
    summary = {}
    for key in ("value_sae", "control_sae", "adversary_sae"):
        summary[f"median_{key}"] = float(np.median(table[key]))
        summary[f"max_{key}"] = float(np.max(table[key]))
    return table, summary


# -- CSV output -----------------------------------------------------------------------

def _row(values):
    return ",".join(f"{float(v):.17g}" for v in values)


def trajectory_csv(traj):
    n = traj.states.shape[1]
    mu, ma = traj.controls.shape[1], traj.adversaries.shape[1]
    header = (["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(mu)]
              + [f"a{i + 1}" for i in range(ma)] + ["cost_integrand", "s_level"])
    lines = [",".join(header)]
    for k in range(len(traj.times)):
        lines.append(_row([traj.times[k], *traj.states[k], *traj.controls[k],
                           *traj.adversaries[k], traj.cost_samples[k], traj.levels[k]]))
    return "\n".join(lines) + "\n"


def metrics_csv(table):
    X = table["points"]
    header = [f"x{i + 1}" for i in range(X.shape[1])] + ["value_sae", "control_sae", "adversary_sae"]
    lines = [",".join(header)]
    for k in range(len(X)):
        lines.append(_row([*X[k], table["value_sae"][k], table["control_sae"][k],
                           table["adversary_sae"][k]]))
    return "\n".join(lines) + "\n"
