"""Barrier-factored neural value ``Vhat(x, w) = h(V_NN(x, w)) * B(x)``.

The HJI loss depends on the input-gradient of ``Vhat``, so parameter
gradients have to flow through the network's input Jacobian.  The forward
pass propagates activations and the Jacobian ``d a_l / d x`` layer by layer;
the backward pass is a reverse sweep over both recurrences, which picks up
the activation second derivative wherever the Jacobian depends on a
pre-activation.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .barrier import BARRIERS, WRAPPERS
from .errors import ConfigurationError, DomainError, NumericError
from .game import _as_batch, _unbatch


def _tanh(z):
    t = np.tanh(z)
    d1 = 1.0 - t * t
    return t, d1, -2.0 * t * d1


def _sigmoid(z):
    s = 0.5 * (1.0 + np.tanh(0.5 * z))
    d1 = s * (1.0 - s)
    return s, d1, d1 * (1.0 - 2.0 * s)


ACTIVATIONS = {"tanh": _tanh, "sigmoid": _sigmoid}


@dataclass(frozen=True)
class MLPConfig:
    input_dim: int = 2
    hidden_layers: int = 3
    hidden_width: int = 32
    activation: str = "tanh"
    init_seed: int = 0

    def __post_init__(self):
        for name in ("input_dim", "hidden_layers", "hidden_width"):
            v = getattr(self, name)
            if not (isinstance(v, (int, np.integer)) and v > 0):
                raise ConfigurationError(f"{name} must be a positive integer, got {v!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(
                f"activation must be one of {sorted(ACTIVATIONS)}, got {self.activation!r}")


class MLP:
    """Fully connected scalar network, hidden activation, identity output."""

    def __init__(self, config: MLPConfig):
        self.config = config
        widths = [config.input_dim] + [config.hidden_width] * config.hidden_layers + [1]
        self.shapes = [(widths[i + 1], widths[i]) for i in range(len(widths) - 1)]
        self.n_params = sum(o * i + o for o, i in self.shapes)
        self._act = ACTIVATIONS[config.activation]

    def init_params(self, seed=None):
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(self.config.init_seed if seed is None else seed)
        parts = []
        for o, i in self.shapes:
            lim = np.sqrt(6.0 / (i + o))
            parts.append(rng.uniform(-lim, lim, size=o * i))
            parts.append(np.zeros(o))
        return np.concatenate(parts)

    def unpack(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_params,):
            raise ConfigurationError(f"parameter vector has shape {w.shape}, expected ({self.n_params},)")
        layers, k = [], 0
        for o, i in self.shapes:
            W = w[k:k + o * i].reshape(o, i)
            k += o * i
            layers.append((W, w[k:k + o]))
            k += o
        return layers

    def forward(self, X, w):
        """Return ``(y, J, cache)`` with ``y`` of shape (B,) and ``J = dy/dx`` of shape (B, n)."""
        layers = self.unpack(w)
        B, n = X.shape
        a = X
        A = np.broadcast_to(np.eye(n), (B, n, n))
        cache = []
        for W, b in layers[:-1]:
            z = a @ W.T + b
            Z = np.matmul(W, A)
            t, d1, d2 = self._act(z)
            cache.append((a, A, Z, d1, d2, W))
            a = t
            A = d1[:, :, None] * Z
        W, b = layers[-1]
        y = a @ W[0] + b[0]
        J = np.einsum("k,bkj->bj", W[0], A)
        cache.append((a, A, W))
        return y, J, cache

    def backward(self, cache, ybar, Jbar):
        """Gradient of ``sum(ybar * y) + sum(Jbar * J)`` with respect to the flat parameters."""
        n_layers = len(cache)
        dWs, dbs = [None] * n_layers, [None] * n_layers
        a, A, W = cache[-1]
        w_out = W[0]
        dWs[-1] = (ybar @ a + np.tensordot(Jbar, A, axes=([0, 1], [0, 2])))[None, :]
        dbs[-1] = np.array([ybar.sum()])
        abar = ybar[:, None] * w_out[None, :]
        Abar = w_out[None, :, None] * Jbar[:, None, :]
        for l in range(n_layers - 2, -1, -1):
            a, A, Z, d1, d2, W = cache[l]
            # A_l = d1 * Z depends on z through d1, hence the d2 term
            zbar = abar * d1 + d2 * np.einsum("bkj,bkj->bk", Abar, Z)
            Zbar = Abar * d1[:, :, None]
            dWs[l] = zbar.T @ a + np.tensordot(Zbar, A, axes=([0, 2], [0, 2]))
            dbs[l] = zbar.sum(axis=0)
            abar = zbar @ W
            Abar = np.matmul(W.T, Zbar)
        return np.concatenate([np.concatenate([dW.ravel(), db]) for dW, db in zip(dWs, dbs)])


class SurrogateValue:
    """``h(V_NN(x, w)) B(x)``: zero at the origin and positive elsewhere in S for every ``w``."""

    def __init__(self, net: MLP, barrier):
        self.net = net
        self.barrier = barrier

    @property
    def n_params(self):
        return self.net.n_params

    def init_params(self, seed=None):
        return self.net.init_params(seed)

    def evaluate(self, X, w):
        """Return ``(V, G, pullback)``; ``pullback(Vbar, Gbar)`` gives the parameter gradient."""
        X, _ = _as_batch(X, self.net.config.input_dim)
        s = self.barrier.level(X)
        if np.any(~(s > 0)):
            i = int(np.argmax(~(s > 0)))
            raise DomainError(f"state {X[i].tolist()} is outside the safe set")
        y, J, cache = self.net.forward(X, w)
        h, h1, h2 = self.barrier.wrapper_terms(y)
        Bv = self.barrier.value_fn(X)
        Bg = self.barrier.gradient_fn(X)
        V = h * Bv
        G = (h1 * Bv)[:, None] * J + h[:, None] * Bg

        def pullback(Vbar, Gbar):
            gJ = np.einsum("bi,bi->b", Gbar, J)
            gB = np.einsum("bi,bi->b", Gbar, Bg)
            ybar = Vbar * h1 * Bv + h2 * Bv * gJ + h1 * gB
            Jbar = (h1 * Bv)[:, None] * Gbar
            return self.net.backward(cache, ybar, Jbar)

        return V, G, pullback

    def value_and_gradient(self, X, w):
        V, G, _ = self.evaluate(X, w)
        return V, G

    def bind(self, w):
        return BoundSurrogate(self, np.asarray(w, dtype=float))


class BoundSurrogate:
    """A surrogate with frozen parameters, usable wherever an exact value is."""

    def __init__(self, surrogate, w):
        self.surrogate = surrogate
        self.w = w

    def value_and_gradient(self, x):
        X, single = _as_batch(x)
        V, G, _ = self.surrogate.evaluate(X, self.w)
        return _unbatch(V, single), _unbatch(G, single)

    def value(self, x):
        return self.value_and_gradient(x)[0]

    def gradient(self, x):
        return self.value_and_gradient(x)[1]


class FixedValue:
    """Parameter-free stand-in that routes a known value through the surrogate interface."""

    n_params = 0

    def __init__(self, exact):
        self.exact = exact

    def init_params(self, seed=None):
        return np.zeros(0)

    def evaluate(self, X, w=None):
        X, _ = _as_batch(X)
        V, G = self.exact.value_and_gradient(X)
        return V, G, lambda Vbar, Gbar: np.zeros(0)

    def value_and_gradient(self, X, w=None):
        return self.evaluate(X, w)[:2]

    def bind(self, w=None):
        return self.exact


def forward(surrogate, x, w):
    X, single = _as_batch(x)
    return _unbatch(surrogate.evaluate(X, w)[0], single)


def grad_x(surrogate, x, w):
    X, single = _as_batch(x)
    return _unbatch(surrogate.evaluate(X, w)[1], single)


def loss_param_gradient(surrogate, X, w, loss_fn):
    """Value and parameter gradient of ``loss_fn(V, G)`` over the points ``X``.

    ``loss_fn`` returns ``(loss, dloss/dV, dloss/dG)`` for the arrays
    ``V`` (B,) and ``G`` (B, n).
    """
    V, G, pullback = surrogate.evaluate(X, w)
    loss, Vbar, Gbar = loss_fn(V, G)
    grad = pullback(np.asarray(Vbar, dtype=float) * np.ones_like(V),
                    np.asarray(Gbar, dtype=float) * np.ones_like(G))
    if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
        raise NumericError("non-finite loss or gradient")
    return float(loss), grad


# -- checkpoints -------------------------------------------------------------------

CHECKPOINT_FORMAT = "safegame-checkpoint/1"


def make_surrogate(config: MLPConfig, barrier="box", wrapper=None):
    if barrier not in BARRIERS:
        raise ConfigurationError(f"unknown barrier {barrier!r}; expected one of {sorted(BARRIERS)}")
    if wrapper is not None and wrapper not in WRAPPERS:
        raise ConfigurationError(f"unknown wrapper {wrapper!r}; expected one of {sorted(WRAPPERS)}")
    b = BARRIERS[barrier]() if wrapper is None else BARRIERS[barrier](wrapper)
    return SurrogateValue(MLP(config), b)


def save_checkpoint(path, surrogate, w, outer_iter=0, extra=None):
    """Write a JSON header line followed by one parameter per line (17 significant digits)."""
    header = {"format": CHECKPOINT_FORMAT, **asdict(surrogate.net.config),
              "barrier": surrogate.barrier.name, "wrapper": surrogate.barrier.wrapper_name,
              "outer_iter": int(outer_iter), "n_params": int(surrogate.n_params)}
    if extra:
        header.update(extra)
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for v in np.asarray(w, dtype=float):
            fh.write(f"{v:.17g}\n")


def read_checkpoint(path):
    """Return ``(header, w)`` without building a surrogate."""
    try:
        with open(path) as fh:
            header = json.loads(fh.readline())
            if header.get("format") != CHECKPOINT_FORMAT:
                raise ConfigurationError(f"{path}: not a {CHECKPOINT_FORMAT} file")
            w = np.array([float(line) for line in fh if line.strip()])
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"{path}: cannot read checkpoint ({exc})") from None
    return header, w


def checkpoint_config(header):
    return MLPConfig(header["input_dim"], header["hidden_layers"], header["hidden_width"],
                     header["activation"], header["init_seed"])


def load_checkpoint(path, barrier=None):
    """Return ``(surrogate, w, header)``.

    ``barrier`` overrides the registry lookup by name (needed for barriers
    that are not in ``BARRIERS``).
    """
    header, w = read_checkpoint(path)
    config = checkpoint_config(header)
    if barrier is None:
        surrogate = make_surrogate(config, header["barrier"], header["wrapper"])
    else:
        if (barrier.name, barrier.wrapper_name) != (header["barrier"], header["wrapper"]):
            raise ConfigurationError(
                f"{path}: checkpoint barrier {header['barrier']}/{header['wrapper']} does not match "
                f"{barrier.name}/{barrier.wrapper_name}")
        surrogate = SurrogateValue(MLP(config), barrier)
    if w.shape != (surrogate.n_params,) or header["n_params"] != surrogate.n_params:
        raise ConfigurationError(
            f"{path}: {w.size} parameters stored, topology needs {surrogate.n_params}")
    return surrogate, w, header
