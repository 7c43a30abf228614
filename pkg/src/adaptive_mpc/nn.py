"""Feedforward 4-16-8-1 regressors mapping operating conditions to one MPC parameter each."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .mpc import MpcParams
from .tuning import PARAM_NAMES, params_from_prediction

LAYERS = (4, 16, 8, 1)
FORMAT = "adaptive-mpc-mlp"
VERSION = 1


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training loss became {loss!r} at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    lr: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    holdout: float = 0.1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if not 0.0 <= self.holdout < 1.0:
            raise ValueError("holdout fraction must lie in [0, 1)")


def _span(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    span = np.asarray(hi, float) - np.asarray(lo, float)
    return np.where(span > 0, span, 1.0)


@dataclass(frozen=True)
class MlpNetwork:
    """Weights carry the bias as their last column: W1 16x5, W2 8x17, W3 1x9."""

    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    x_lo: np.ndarray = field(default_factory=lambda: np.zeros(4))
    x_hi: np.ndarray = field(default_factory=lambda: np.ones(4))
    y_lo: float = 0.0
    y_hi: float = 1.0
    target: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = [(LAYERS[i + 1], LAYERS[i] + 1) for i in range(3)]
        for w, shape in zip((self.w1, self.w2, self.w3), shapes):
            if w.shape != shape:
                raise ValueError(f"weight matrix has shape {w.shape}, expected {shape}")
            if not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite")

    @property
    def weights(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.w1, self.w2, self.w3

    def normalize(self, x) -> np.ndarray:
        return (np.asarray(x, float) - self.x_lo) / _span(self.x_lo, self.x_hi)

    def denormalize(self, o):
        return self.y_lo + o * (self.y_hi - self.y_lo if self.y_hi > self.y_lo else 1.0)


def init_network(seed: int = 0, **ranges) -> MlpNetwork:
    """Xavier-uniform weights. The output bias starts at 0.5 so the ReLU output is
    live on most of the normalized target range from the first epoch."""
    rng = np.random.default_rng(seed)
    ws = []
    for fan_in, fan_out in zip(LAYERS[:-1], LAYERS[1:]):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        ws.append(rng.uniform(-lim, lim, size=(fan_out, fan_in + 1)))
    ws[2][0, -1] = 0.5
    return MlpNetwork(*ws, **ranges)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _with_bias(a: np.ndarray) -> np.ndarray:
    return np.hstack([a, np.ones((a.shape[0], 1))])


def _forward_norm(weights, xn: np.ndarray):
    w1, w2, w3 = weights
    a0 = _with_bias(xn)
    h1 = _sigmoid(a0 @ w1.T)
    a1 = _with_bias(h1)
    h2 = _sigmoid(a1 @ w2.T)
    a2 = _with_bias(h2)
    z3 = a2 @ w3.T
    return (a0, h1, a1, h2, a2, z3), np.maximum(z3, 0.0)


def mlp_forward_batch(net: MlpNetwork, inputs) -> np.ndarray:
    xn = net.normalize(np.atleast_2d(inputs))
    _, o = _forward_norm(net.weights, xn)
    return net.denormalize(o[:, 0])


def mlp_forward(net: MlpNetwork, inputs) -> float:
    """Prediction for one (vx, wind, mu, y_ref) input, in target units."""
    x = np.asarray(inputs, float).reshape(1, 4)
    return float(mlp_forward_batch(net, x)[0])


def mlp_input_jacobian(net: MlpNetwork, inputs) -> np.ndarray:
    """d(prediction)/d(inputs) at one point, in physical units."""
    xn = net.normalize(np.asarray(inputs, float).reshape(1, 4))
    (a0, h1, a1, h2, a2, z3), _ = _forward_norm(net.weights, xn)
    w1, w2, w3 = net.weights
    g = (z3[0, 0] > 0) * w3[0, :-1] * h2[0] * (1 - h2[0])
    g = (g @ w2[:, :-1]) * h1[0] * (1 - h1[0])
    g = g @ w1[:, :-1]
    y_scale = net.y_hi - net.y_lo if net.y_hi > net.y_lo else 1.0
    return y_scale * g / _span(net.x_lo, net.x_hi)


def loss_and_grad(weights, xn: np.ndarray, tn: np.ndarray):
    """MSE on normalized data and its gradient for each weight matrix."""
    (a0, h1, a1, h2, a2, z3), o = _forward_norm(weights, xn)
    _, w2, w3 = weights
    t = np.asarray(tn, float).reshape(-1, 1)
    err = o - t
    n = xn.shape[0]
    loss = float(np.mean(err ** 2))
    d3 = 2.0 * err / n * (z3 > 0)
    g3 = d3.T @ a2
    d2 = (d3 @ w3[:, :-1]) * h2 * (1 - h2)
    g2 = d2.T @ a1
    d1 = (d2 @ w2[:, :-1]) * h1 * (1 - h1)
    g1 = d1.T @ a0
    return loss, (g1, g2, g3)


def fit_ranges(x, y) -> dict:
    x = np.asarray(x, float)
    y = np.asarray(y, float).reshape(-1)
    return dict(x_lo=x.min(axis=0), x_hi=x.max(axis=0), y_lo=float(y.min()), y_hi=float(y.max()))


def split_holdout(n: int, frac: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded train/validation index split; validation is empty when it would be < 1 row
    or would leave nothing to train on."""
    idx = np.random.default_rng(seed).permutation(n)
    n_val = int(round(frac * n))
    if n_val < 1 or n_val >= n:
        return np.sort(idx), np.array([], dtype=int)
    return np.sort(idx[n_val:]), np.sort(idx[:n_val])


@dataclass
class TrainResult:
    net: MlpNetwork
    history: list[float]
    val_mse: float | None


def mlp_train(net: MlpNetwork, x, y, cfg: TrainConfig | None = None) -> TrainResult:
    """Full-batch gradient descent with momentum on every row given.

    ``history[k]`` is the training MSE (normalized units) before update k, with the
    final MSE appended, so ``history[0]`` is the initial loss.
    """
    cfg = cfg or TrainConfig()
    x = np.asarray(x, float)
    y = np.asarray(y, float).reshape(-1)
    if x.ndim != 2 or x.shape[1] != 4 or x.shape[0] == 0 or y.shape[0] != x.shape[0]:
        raise ValueError("need a non-empty (N, 4) input array and N targets")
    xn = net.normalize(x)
    tn = (y - net.y_lo) / (net.y_hi - net.y_lo if net.y_hi > net.y_lo else 1.0)
    ws = [w.copy() for w in net.weights]
    vel = [np.zeros_like(w) for w in ws]
    history = []
    for epoch in range(cfg.epochs):
        loss, grads = loss_and_grad(ws, xn, tn)
        if not math.isfinite(loss):
            raise TrainingDiverged(epoch, loss)
        history.append(loss)
        for w, v, g in zip(ws, vel, grads):
            v *= cfg.momentum
            v -= cfg.lr * g
            w += v
    final, _ = loss_and_grad(ws, xn, tn)
    if not math.isfinite(final):
        raise TrainingDiverged(cfg.epochs, final)
    history.append(final)
    trained = replace(net, w1=ws[0], w2=ws[1], w3=ws[2])
    return TrainResult(trained, history, None)


def train_network(x, y, cfg: TrainConfig | None = None, target: str = "",
                  init_seed: int | None = None) -> TrainResult:
    """Fit normalization on the whole dataset, hold out a seeded fraction, train, and
    report the validation MSE in normalized units."""
    cfg = cfg or TrainConfig()
    x = np.asarray(x, float)
    y = np.asarray(y, float).reshape(-1)
    net = init_network(cfg.seed if init_seed is None else init_seed, target=target,
                       **fit_ranges(x, y))
    tr, va = split_holdout(len(y), cfg.holdout, cfg.seed)
    res = mlp_train(net, x[tr], y[tr], cfg)
    val = None
    if va.size:
        xn = res.net.normalize(x[va])
        tn = (y[va] - net.y_lo) / (net.y_hi - net.y_lo if net.y_hi > net.y_lo else 1.0)
        val, _ = loss_and_grad(res.net.weights, xn, tn)
    meta = {"seed": cfg.seed, "epochs": cfg.epochs, "lr": cfg.lr, "momentum": cfg.momentum,
            "final_loss": res.history[-1], "val_mse": val, "n_train": int(tr.size),
            "n_val": int(va.size)}
    return TrainResult(replace(res.net, meta=meta), res.history, val)


def network_to_dict(net: MlpNetwork) -> dict:
    return {
        "target": net.target,
        "layers": list(LAYERS),
        "weights": [w.tolist() for w in net.weights],
        "input_range": [net.x_lo.tolist(), net.x_hi.tolist()],
        "output_range": [net.y_lo, net.y_hi],
        "meta": net.meta,
    }


def network_from_dict(d: dict) -> MlpNetwork:
    if tuple(d["layers"]) != LAYERS:
        raise ValueError(f"unsupported layer sizes {d['layers']}")
    w1, w2, w3 = (np.array(w, dtype=float) for w in d["weights"])
    return MlpNetwork(w1, w2, w3, np.array(d["input_range"][0], float),
                      np.array(d["input_range"][1], float), float(d["output_range"][0]),
                      float(d["output_range"][1]), d.get("target", ""), d.get("meta", {}))


def adapt_parameters_nn(nets, cond) -> MpcParams:
    """Query the four networks (np, nc, q, r order) and clamp onto valid parameters."""
    x = cond.as_array() if hasattr(cond, "as_array") else np.asarray(cond, float)
    return params_from_prediction([mlp_forward(n, x) for n in nets])


class NnAdapter:
    def __init__(self, nets):
        nets = list(nets)
        if len(nets) != 4:
            raise ValueError("need one network per MPC parameter")
        self.nets = nets

    def predict(self, vx: float, wind: float, mu: float, y_ref: float) -> MpcParams:
        return adapt_parameters_nn(self.nets, np.array([vx, wind, mu, y_ref], float))

    @classmethod
    def train(cls, x, targets, cfg: TrainConfig | None = None) -> tuple["NnAdapter", list[TrainResult]]:
        """``targets`` is (N, 4) in np, nc, q, r order; each net gets its own init seed."""
        cfg = cfg or TrainConfig()
        targets = np.asarray(targets, float)
        results = [train_network(x, targets[:, j], cfg, PARAM_NAMES[j], init_seed=cfg.seed + j)
                   for j in range(4)]
        return cls([r.net for r in results]), results

    def save(self, path) -> None:
        doc = {"format": FORMAT, "version": VERSION,
               "networks": [network_to_dict(n) for n in self.nets]}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "NnAdapter":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format") != FORMAT or doc.get("version") != VERSION:
            raise ValueError(f"{path}: not a version-{VERSION} {FORMAT} file")
        return cls([network_from_dict(d) for d in doc["networks"]])
