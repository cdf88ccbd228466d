"""LSTM and feedforward crisis predictors written directly in numpy.

The LSTM cell follows the usual forget/update/output gate layout::

    f = sigmoid(x U^f + a_prev W^f + b^f)
    u = sigmoid(x U^u + a_prev W^u + b^u)
    o = sigmoid(x U^o + a_prev W^o + b^o)
    g = tanh(x U^g + a_prev W^g + b^g)
    c = f * c_prev + u * g
    a = o * tanh(c)

and a window of ``l`` cells starting from a = c = 0 is read out through a
single sigmoid unit after the last cell.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

GATES = ("f", "u", "o", "g")
PROB_CLIP = 1e-7


class ShapeError(ValueError):
    pass


class DivergenceError(ArithmeticError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


@dataclass
class TrainConfig:
    window: int = 5
    batch_size: int = 20
    epochs: int = 100
    learning_rate: float = 0.05
    seed: int = 0
    hidden: int = 32
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.window < 1 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("window, batch_size and epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def parameter_count(input_dim: int, hidden_dim: int) -> int:
    if input_dim < 1 or hidden_dim < 1:
        raise ValueError("dimensions must be >= 1")
    h, d = hidden_dim, input_dim
    return 4 * (h * (d + h) + h) + (h + 1)


def bce_from_probs(y, p) -> float:
    p = np.clip(p, PROB_CLIP, 1 - PROB_CLIP)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


class _Network:
    kind = ""
    params: dict[str, np.ndarray]

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def copy(self):
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.params = {k: v.copy() for k, v in self.params.items()}
        return new

    def loss(self, X, y) -> float:
        return bce_from_probs(np.asarray(y, dtype=float), self.predict(X))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(dump_network(self))

    @staticmethod
    def load(path):
        with open(path) as fh:
            return parse_network(fh.read())


class LstmNetwork(_Network):
    kind = "lstm"

    def __init__(self, input_dim: int, hidden_dim: int, seed: int | None = 0, zero: bool = False):
        self.input_dim = int(input_dim)
        self.hidden_dim = int(hidden_dim)
        d, h = self.input_dim, self.hidden_dim
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(h)
        init = (lambda shape: np.zeros(shape)) if zero else (lambda shape: rng.uniform(-bound, bound, shape))
        self.params = {}
        for g in GATES:
            self.params["U" + g] = init((d, h))
        for g in GATES:
            self.params["W" + g] = init((h, h))
        for g in GATES:
            self.params["b" + g] = np.zeros(h)
        self.params["V"] = init((h,))
        self.params["b_out"] = np.zeros(1)

    def _stacked(self):
        p = self.params
        U = np.concatenate([p["U" + g] for g in GATES], axis=1)
        W = np.concatenate([p["W" + g] for g in GATES], axis=1)
        b = np.concatenate([p["b" + g] for g in GATES])
        return U, W, b

    def cell_step(self, x_t, a_prev, c_prev):
        x_t = np.asarray(x_t, dtype=float)
        a_prev = np.asarray(a_prev, dtype=float)
        c_prev = np.asarray(c_prev, dtype=float)
        if x_t.shape[-1] != self.input_dim or a_prev.shape[-1] != self.hidden_dim or c_prev.shape != a_prev.shape:
            raise ShapeError("input or state dimension does not match the network")
        U, W, b = self._stacked()
        a, c, _ = self._step(x_t, a_prev, c_prev, U, W, b)
        return a, c

    def _step(self, x, a_prev, c_prev, U, W, b):
        h = self.hidden_dim
        z = x @ U + a_prev @ W + b
        f = sigmoid(z[..., :h])
        u = sigmoid(z[..., h : 2 * h])
        o = sigmoid(z[..., 2 * h : 3 * h])
        g = np.tanh(z[..., 3 * h :])
        c = f * c_prev + u * g
        tc = np.tanh(c)
        a = o * tc
        return a, c, (f, u, o, g, tc)

    def _check_windows(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            X = X[None]
        if X.ndim != 3 or X.shape[2] != self.input_dim:
            raise ShapeError(f"expected windows of shape (batch, l, {self.input_dim}), got {X.shape}")
        return X

    def forward(self, X, window: int | None = None):
        """Predicted probabilities for a batch of windows (B, l, d)."""
        X = self._check_windows(X)
        if window is not None and X.shape[1] != window:
            raise ShapeError(f"window length {X.shape[1]} != {window}")
        U, W, b = self._stacked()
        B = X.shape[0]
        a = np.zeros((B, self.hidden_dim))
        c = np.zeros((B, self.hidden_dim))
        for t in range(X.shape[1]):
            a, c, _ = self._step(X[:, t], a, c, U, W, b)
        return sigmoid(a @ self.params["V"] + self.params["b_out"][0])

    predict = forward

    def gradients(self, X, y):
        """Mean BCE over the batch and its gradient for every parameter (BPTT)."""
        X = self._check_windows(X)
        y = np.asarray(y, dtype=float).reshape(-1)
        B, L, _ = X.shape
        h = self.hidden_dim
        U, W, b = self._stacked()
        a = np.zeros((B, h))
        c = np.zeros((B, h))
        cache = []
        for t in range(L):
            a_prev, c_prev = a, c
            a, c, gates = self._step(X[:, t], a_prev, c_prev, U, W, b)
            cache.append((a_prev, c_prev, gates))
        yhat = sigmoid(a @ self.params["V"] + self.params["b_out"][0])
        loss = bce_from_probs(y, yhat)

        dlogit = (yhat - y) / B
        grads = {"V": a.T @ dlogit, "b_out": np.array([dlogit.sum()])}
        dU = np.zeros_like(U)
        dW = np.zeros_like(W)
        db = np.zeros_like(b)
        da = np.outer(dlogit, self.params["V"])
        dc = np.zeros((B, h))
        for t in reversed(range(L)):
            a_prev, c_prev, (f, u, o, g, tc) = cache[t]
            do = da * tc
            dc = dc + da * o * (1.0 - tc * tc)
            dz = np.concatenate(
                [dc * c_prev * f * (1 - f), dc * g * u * (1 - u), do * o * (1 - o), dc * u * (1 - g * g)],
                axis=1,
            )
            dU += X[:, t].T @ dz
            dW += a_prev.T @ dz
            db += dz.sum(axis=0)
            da = dz @ W.T
            dc = dc * f
        for k, gname in enumerate(GATES):
            sl = slice(k * h, (k + 1) * h)
            grads["U" + gname] = dU[:, sl]
            grads["W" + gname] = dW[:, sl]
            grads["b" + gname] = db[sl]
        return loss, grads


class MlpNetwork(_Network):
    """One sigmoid hidden layer over a flattened window, sigmoid output."""

    kind = "bpnn"

    def __init__(self, input_dim: int, hidden_dim: int = 32, window: int = 1, seed: int | None = 0,
                 zero: bool = False):
        self.input_dim = int(input_dim)
        self.hidden_dim = int(hidden_dim)
        self.window = int(window)
        n_in = self.input_dim * self.window
        rng = np.random.default_rng(seed)

        def init(shape, fan_in):
            if zero:
                return np.zeros(shape)
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, shape)

        self.params = {
            "W1": init((n_in, self.hidden_dim), n_in),
            "b1": np.zeros(self.hidden_dim),
            "w2": init((self.hidden_dim,), self.hidden_dim),
            "b2": np.zeros(1),
        }

    def _flatten(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 2 and X.shape[1] == self.input_dim * self.window:
            return X
        if X.ndim == 2:
            X = X[None]
        if X.ndim != 3 or X.shape[1] != self.window or X.shape[2] != self.input_dim:
            raise ShapeError(f"expected windows of shape (batch, {self.window}, {self.input_dim}), got {X.shape}")
        return X.reshape(X.shape[0], -1)

    def forward(self, X):
        Z = self._flatten(X)
        hid = sigmoid(Z @ self.params["W1"] + self.params["b1"])
        return sigmoid(hid @ self.params["w2"] + self.params["b2"][0])

    predict = forward

    def gradients(self, X, y):
        Z = self._flatten(X)
        y = np.asarray(y, dtype=float).reshape(-1)
        B = Z.shape[0]
        hid = sigmoid(Z @ self.params["W1"] + self.params["b1"])
        yhat = sigmoid(hid @ self.params["w2"] + self.params["b2"][0])
        loss = bce_from_probs(y, yhat)
        dlogit = (yhat - y) / B
        dhid = np.outer(dlogit, self.params["w2"]) * hid * (1 - hid)
        grads = {
            "w2": hid.T @ dlogit,
            "b2": np.array([dlogit.sum()]),
            "W1": Z.T @ dhid,
            "b1": dhid.sum(axis=0),
        }
        return loss, grads


# -- windows and training -----------------------------------------------------

def make_windows(features, labels, window: int):
    """Windows ending at t (rows t-l+1..t) paired with the label at t+1."""
    F = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if F.ndim != 2 or len(F) != len(y):
        raise ShapeError("features must be 2-d and aligned with labels")
    n = len(F) - window
    if n < 1:
        raise ValueError(f"need more than {window} rows to form a window with a next-day target")
    idx = np.arange(window)[None, :] + np.arange(n)[:, None]
    return F[idx], y[window:]


def latest_window(features, window: int) -> np.ndarray:
    F = np.asarray(features, dtype=float)
    if len(F) < window:
        raise ValueError("not enough rows for a window")
    return F[-window:][None]


def _global_norm(grads):
    return float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))


def fit_network(net: _Network, X, y, cfg: TrainConfig) -> _Network:
    """Mini-batch gradient descent on mean BCE; records ``net.loss_history``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(cfg.seed)
    n = len(y)
    history = []
    n_clipped = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = net.gradients(X[idx], y[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss in epoch {epoch}", epoch=epoch)
            norm = _global_norm(grads)
            scale = 1.0
            if cfg.clip_norm and norm > cfg.clip_norm:
                scale = cfg.clip_norm / norm
                n_clipped += 1
            if cfg.learning_rate:
                for k, g in grads.items():
                    net.params[k] -= cfg.learning_rate * scale * g
            total += loss * len(idx)
        history.append(total / n)
        if not np.isfinite(history[-1]):
            raise DivergenceError(f"non-finite loss in epoch {epoch}", epoch=epoch)
    if n_clipped:
        logger.debug("gradient clipping triggered on %d batches", n_clipped)
    net.loss_history = history
    return net


def _as_matrix(panel, feature_names=None):
    if hasattr(panel, "matrix"):
        return panel.matrix(feature_names)
    return np.asarray(panel, dtype=float)


def _as_labels(targets):
    return np.asarray(getattr(targets, "labels", targets), dtype=float)


def train_lstm(panel, targets, cfg: TrainConfig, feature_names=None) -> LstmNetwork:
    F = _as_matrix(panel, feature_names)
    X, y = make_windows(F, _as_labels(targets), cfg.window)
    net = LstmNetwork(F.shape[1], cfg.hidden, seed=cfg.seed)
    return fit_network(net, X, y, cfg)


def train_mlp(panel, targets, cfg: TrainConfig, feature_names=None) -> MlpNetwork:
    F = _as_matrix(panel, feature_names)
    X, y = make_windows(F, _as_labels(targets), cfg.window)
    net = MlpNetwork(F.shape[1], cfg.hidden, window=cfg.window, seed=cfg.seed)
    return fit_network(net, X, y, cfg)


def build_network(kind: str, input_dim: int, cfg: TrainConfig) -> _Network:
    if kind == "lstm":
        return LstmNetwork(input_dim, cfg.hidden, seed=cfg.seed)
    if kind == "bpnn":
        return MlpNetwork(input_dim, cfg.hidden, window=cfg.window, seed=cfg.seed)
    raise ValueError(f"unknown predictor {kind!r}")


# -- checkpoint format --------------------------------------------------------
#
#   stockews-network 1
#   kind <lstm|bpnn>
#   input_dim <d>
#   hidden_dim <h>
#   window <l>
#   param <name> <ndim> <dim...>
#   <values, space separated, row-major, repr() floats>
#   ...

def dump_network(net: _Network) -> str:
    lines = ["stockews-network 1", f"kind {net.kind}", f"input_dim {net.input_dim}",
             f"hidden_dim {net.hidden_dim}", f"window {getattr(net, 'window', 0)}"]
    for name, arr in net.params.items():
        lines.append(f"param {name} {arr.ndim} " + " ".join(str(s) for s in arr.shape))
        lines.append(" ".join(repr(float(v)) for v in arr.ravel()))
    return "\n".join(lines) + "\n"


def parse_network(text: str) -> _Network:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "stockews-network 1":
        raise ValueError("not a stockews network checkpoint")
    header = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("param "):
        key, value = lines[i].split()
        header[key] = value
        i += 1
    d, h = int(header["input_dim"]), int(header["hidden_dim"])
    if header["kind"] == "lstm":
        net = LstmNetwork(d, h, zero=True)
    elif header["kind"] == "bpnn":
        net = MlpNetwork(d, h, window=int(header["window"]), zero=True)
    else:
        raise ValueError(f"unknown network kind {header['kind']!r}")
    while i < len(lines):
        parts = lines[i].split()
        name, ndim = parts[1], int(parts[2])
        shape = tuple(int(s) for s in parts[3 : 3 + ndim])
        values = np.array([float(v) for v in lines[i + 1].split()], dtype=float)
        if name not in net.params or net.params[name].shape != shape:
            raise ValueError(f"parameter {name} has unexpected shape {shape}")
        net.params[name] = values.reshape(shape)
        i += 2
    return net
