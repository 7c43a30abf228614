"""First-order Takagi-Sugeno ANFIS with Gaussian memberships, subtractive-clustering
rule extraction and hybrid (least-squares consequents, gradient premises) training."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .mpc import MpcParams
from .tuning import PARAM_NAMES, params_from_prediction

log = logging.getLogger(__name__)

FORMAT = "adaptive-mpc-anfis"
VERSION = 1
N_INPUTS = 4
STRENGTH_FLOOR = 1e-12
SIGMA_FLOOR = 1e-3


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, what: str):
        super().__init__(f"{what} became non-finite at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class HybridTrainConfig:
    epochs: int = 50
    lr: float = 0.01
    forgetting: float = 1.0
    radius: float = 0.5
    p0: float = 1e6
    seed: int = 0
    freeze_premises: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 < self.radius <= 1.0:
            raise ValueError("cluster radius must lie in (0, 1]")
        if not 0.0 < self.forgetting <= 1.0:
            raise ValueError("forgetting factor must lie in (0, 1]")
        if not (self.lr > 0 and self.p0 > 0):
            raise ValueError("learning rate and initial covariance must be > 0")


@dataclass(frozen=True)
class AnfisModel:
    """``centers``/``sigmas`` are (R, 4) in normalized input units; ``consequents`` is
    (R, 5) holding p1..p4 and the constant term, producing normalized output."""

    centers: np.ndarray
    sigmas: np.ndarray
    consequents: np.ndarray
    x_lo: np.ndarray = field(default_factory=lambda: np.zeros(N_INPUTS))
    x_hi: np.ndarray = field(default_factory=lambda: np.ones(N_INPUTS))
    y_lo: float = 0.0
    y_hi: float = 1.0
    target: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        r = self.centers.shape[0]
        if r < 1 or self.centers.shape != (r, N_INPUTS) or self.sigmas.shape != (r, N_INPUTS):
            raise ValueError("centers and sigmas must both be (R, 4) with R >= 1")
        if self.consequents.shape != (r, N_INPUTS + 1):
            raise ValueError(f"consequents must be ({r}, {N_INPUTS + 1})")
        if not np.all(self.sigmas > 0):
            raise ValueError("membership widths must be > 0")
        for a in (self.centers, self.sigmas, self.consequents):
            if not np.all(np.isfinite(a)):
                raise ValueError("model parameters must be finite")

    @property
    def n_rules(self) -> int:
        return self.centers.shape[0]

    @property
    def y_span(self) -> float:
        return self.y_hi - self.y_lo if self.y_hi > self.y_lo else 1.0

    def normalize(self, x) -> np.ndarray:
        span = self.x_hi - self.x_lo
        return (np.asarray(x, float) - self.x_lo) / np.where(span > 0, span, 1.0)


def gaussian_mf(x, c, sigma):
    return np.exp(-((x - c) ** 2) / (2.0 * sigma ** 2))


def _layers(centers, sigmas, consequents, xn: np.ndarray):
    """Batch pass on normalized inputs (N, 4); returns every layer plus the fallback mask."""
    mu = gaussian_mf(xn[:, None, :], centers[None], sigmas[None])
    w = mu.prod(axis=2)
    total = w.sum(axis=1)
    fallback = total < STRENGTH_FLOOR
    wbar = np.where(fallback[:, None], 1.0 / w.shape[1],
                    w / np.where(fallback, 1.0, total)[:, None])
    f = xn @ consequents[:, :N_INPUTS].T + consequents[:, N_INPUTS]
    weighted = wbar * f
    return mu, w, wbar, f, weighted, weighted.sum(axis=1), fallback


def anfis_forward(model: AnfisModel, inputs, clamp: bool = True) -> tuple[float, dict]:
    """One prediction in target units plus the per-layer trace (normalized units).

    Inputs outside the training ranges are clamped when ``clamp`` is set.
    """
    x = np.asarray(inputs, float).reshape(1, N_INPUTS)
    if not np.all(np.isfinite(x)):
        raise ValueError("inputs must be finite")
    if clamp:
        x = np.clip(x, model.x_lo, model.x_hi)
    mu, w, wbar, f, weighted, out, fallback = _layers(
        model.centers, model.sigmas, model.consequents, model.normalize(x))
    if fallback[0]:
        log.debug("input %s is far from every rule; using uniform strengths", x[0])
    trace = {"membership": mu[0], "strength": w[0], "normalized": wbar[0], "rule_output": f[0],
             "weighted": weighted[0], "output": float(out[0]), "fallback": bool(fallback[0])}
    return float(model.y_lo + out[0] * model.y_span), trace


def anfis_predict_batch(model: AnfisModel, x) -> np.ndarray:
    x = np.clip(np.atleast_2d(np.asarray(x, float)), model.x_lo, model.x_hi)
    out = _layers(model.centers, model.sigmas, model.consequents, model.normalize(x))[5]
    return model.y_lo + out * model.y_span


def subtractive_clustering(xn, radius: float = 0.5, squash: float = 1.5,
                           reject_ratio: float = 0.15, accept_ratio: float = 0.5,
                           chunk: int = 1024) -> np.ndarray:
    """Cluster centers (a subset of the data rows) by mountain-potential subtraction.

    A candidate above ``accept_ratio`` times the first potential is always taken and
    selection stops below ``reject_ratio``. In between, a candidate is taken only when
    it is far enough from the existing centers relative to its potential; otherwise
    its potential is zeroed and the next one is tried.
    """
    xn = np.asarray(xn, float)
    if xn.ndim != 2 or xn.shape[0] == 0:
        raise ValueError("need a non-empty 2-D data array")
    if not 0.0 < radius <= 1.0:
        raise ValueError("cluster radius must lie in (0, 1]")
    alpha = 4.0 / radius ** 2
    beta = 4.0 / (squash * radius) ** 2
    sq = (xn ** 2).sum(axis=1)
    pot = np.empty(len(xn))
    for s in range(0, len(xn), chunk):
        d2 = np.maximum(sq[s:s + chunk, None] + sq[None] - 2.0 * xn[s:s + chunk] @ xn.T, 0.0)
        pot[s:s + chunk] = np.exp(-alpha * d2).sum(axis=1)
    first = pot.max()
    centers: list[np.ndarray] = []
    while len(centers) < len(xn):
        k = int(np.argmax(pot))
        p = pot[k]
        if centers and p < reject_ratio * first:
            break
        if centers and p < accept_ratio * first:
            d_min = min(float(np.linalg.norm(xn[k] - c)) for c in centers)
            if d_min / radius + p / first < 1.0:
                pot[k] = 0.0
                continue
        c = xn[k].copy()
        centers.append(c)
        pot = pot - p * np.exp(-beta * ((xn - c) ** 2).sum(axis=1))
    return np.array(centers)


def anfis_init_scatter(xn, radius: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Premise structure from normalized inputs: (centers, sigmas), one rule per cluster."""
    xn = np.asarray(xn, float)
    if xn.shape[0] > 1 and np.all(np.ptp(xn, axis=0) == 0):
        log.warning("all training inputs are identical; using a single rule")
        centers = xn[:1].copy()
    else:
        centers = subtractive_clustering(xn, radius)
    sigmas = np.full_like(centers, radius / math.sqrt(8.0))
    return centers, sigmas


def regressors(wbar: np.ndarray, xn: np.ndarray) -> np.ndarray:
    """Rows [wbar_1*[x;1], ..., wbar_R*[x;1]] so the output is regressors @ theta."""
    xb = np.hstack([xn, np.ones((xn.shape[0], 1))])
    return (wbar[:, :, None] * xb[:, None, :]).reshape(xn.shape[0], -1)


def rls_recursive(phi: np.ndarray, t: np.ndarray, theta0: np.ndarray, p0: float = 1e6,
                  forgetting: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Sample-by-sample RLS from ``theta0`` with covariance ``p0 * I``."""
    theta = np.array(theta0, float)
    p = np.eye(phi.shape[1]) * p0
    for a, y in zip(phi, t):
        pa = p @ a
        gain = pa / (forgetting + a @ pa)
        theta = theta + gain * (y - a @ theta)
        p = (p - np.outer(gain, pa)) / forgetting
    return theta, p


def rls_batch(phi: np.ndarray, t: np.ndarray, theta0: np.ndarray, p0: float = 1e6) -> np.ndarray:
    """Closed form of one RLS pass with no forgetting:
    argmin |t - phi theta|^2 + |theta - theta0|^2 / p0."""
    lhs = phi.T @ phi + np.eye(phi.shape[1]) / p0
    rhs = phi.T @ (t - phi @ theta0)
    return theta0 + np.linalg.solve(lhs, rhs)


def premise_loss_and_grad(centers, sigmas, consequents, xn, tn):
    """MSE (normalized) and its gradient with respect to centers and sigmas."""
    mu, w, wbar, f, _, out, fallback = _layers(centers, sigmas, consequents, xn)
    err = out - tn
    n = xn.shape[0]
    loss = float(np.mean(err ** 2))
    total = np.where(fallback, 1.0, w.sum(axis=1))
    # d out / d w_i = (f_i - out) / sum(w); zero where the fallback is active
    dw = (2.0 * err / n)[:, None] * (f - out[:, None]) / total[:, None]
    dw[fallback] = 0.0
    diff = xn[:, None, :] - centers[None]
    base = (dw * w)[:, :, None]
    gc = (base * diff / sigmas[None] ** 2).sum(axis=0)
    gs = (base * diff ** 2 / sigmas[None] ** 3).sum(axis=0)
    return loss, gc, gs


def _mse(centers, sigmas, consequents, xn, tn) -> float:
    out = _layers(centers, sigmas, consequents, xn)[5]
    return float(np.mean((out - tn) ** 2))


@dataclass
class HybridResult:
    model: AnfisModel
    history: list[float]
    rls_history: list[float]


def anfis_train_hybrid(model: AnfisModel, x, y, cfg: HybridTrainConfig | None = None) -> HybridResult:
    """Alternate a least-squares consequent pass and a premise gradient step each epoch.

    The RLS pass starts from the current consequents, so its result never has a
    larger squared error than they do. ``history`` holds the MSE before training
    and after every epoch; ``rls_history`` the MSE right after each RLS pass.
    """
    cfg = cfg or HybridTrainConfig()
    x = np.asarray(x, float)
    y = np.asarray(y, float).reshape(-1)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] != N_INPUTS or y.shape[0] != x.shape[0]:
        raise ValueError("need a non-empty (N, 4) input array and N targets")
    xn = model.normalize(x)
    tn = (y - model.y_lo) / model.y_span
    c, s, theta = model.centers.copy(), model.sigmas.copy(), model.consequents.reshape(-1).copy()
    n_rules = c.shape[0]
    history = [_mse(c, s, theta.reshape(n_rules, -1), xn, tn)]
    rls_history = []
    for epoch in range(cfg.epochs):
        before = _mse(c, s, theta.reshape(n_rules, -1), xn, tn)
        wbar = _layers(c, s, theta.reshape(n_rules, -1), xn)[2]
        phi = regressors(wbar, xn)
        if cfg.forgetting == 1.0:
            theta = rls_batch(phi, tn, theta, cfg.p0)
        else:
            theta, _ = rls_recursive(phi, tn, theta, cfg.p0, cfg.forgetting)
        if not np.all(np.isfinite(theta)):
            raise TrainingDiverged(epoch, "RLS solution")
        mid = _mse(c, s, theta.reshape(n_rules, -1), xn, tn)
        if cfg.forgetting == 1.0 and mid > before * (1.0 + 1e-9) + 1e-15:
            raise AssertionError(f"least-squares pass increased MSE at epoch {epoch}")
        rls_history.append(mid)
        if not cfg.freeze_premises:
            _, gc, gs = premise_loss_and_grad(c, s, theta.reshape(n_rules, -1), xn, tn)
            c = c - cfg.lr * gc
            s = np.maximum(s - cfg.lr * gs, SIGMA_FLOOR)
        loss = _mse(c, s, theta.reshape(n_rules, -1), xn, tn)
        if not math.isfinite(loss):
            raise TrainingDiverged(epoch, "training loss")
        history.append(loss)
    trained = replace(model, centers=c, sigmas=s, consequents=theta.reshape(n_rules, -1))
    return HybridResult(trained, history, rls_history)


def train_anfis(x, y, cfg: HybridTrainConfig | None = None, target: str = "") -> HybridResult:
    """Normalize on the dataset, extract rules by clustering, then run hybrid training."""
    cfg = cfg or HybridTrainConfig()
    x = np.asarray(x, float)
    y = np.asarray(y, float).reshape(-1)
    x_lo, x_hi = x.min(axis=0), x.max(axis=0)
    y_lo, y_hi = float(y.min()), float(y.max())
    base = AnfisModel(np.zeros((1, N_INPUTS)), np.ones((1, N_INPUTS)), np.zeros((1, N_INPUTS + 1)),
                      x_lo, x_hi, y_lo, y_hi, target)
    centers, sigmas = anfis_init_scatter(base.normalize(x), cfg.radius)
    model = replace(base, centers=centers, sigmas=sigmas,
                    consequents=np.zeros((len(centers), N_INPUTS + 1)))
    res = anfis_train_hybrid(model, x, y, cfg)
    meta = {"seed": cfg.seed, "epochs": cfg.epochs, "lr": cfg.lr, "radius": cfg.radius,
            "forgetting": cfg.forgetting, "rules": int(len(centers)), "final_loss": res.history[-1]}
    return HybridResult(replace(res.model, meta=meta), res.history, res.rls_history)


def model_to_dict(m: AnfisModel) -> dict:
    return {
        "target": m.target,
        "rules": [{"centers": c.tolist(), "sigmas": s.tolist(), "consequent": q.tolist()}
                  for c, s, q in zip(m.centers, m.sigmas, m.consequents)],
        "input_range": [m.x_lo.tolist(), m.x_hi.tolist()],
        "output_range": [m.y_lo, m.y_hi],
        "meta": m.meta,
    }


def model_from_dict(d: dict) -> AnfisModel:
    rules = d["rules"]
    return AnfisModel(np.array([r["centers"] for r in rules], float),
                      np.array([r["sigmas"] for r in rules], float),
                      np.array([r["consequent"] for r in rules], float),
                      np.array(d["input_range"][0], float), np.array(d["input_range"][1], float),
                      float(d["output_range"][0]), float(d["output_range"][1]),
                      d.get("target", ""), d.get("meta", {}))


def adapt_parameters_anfis(models, cond) -> MpcParams:
    x = cond.as_array() if hasattr(cond, "as_array") else np.asarray(cond, float)
    return params_from_prediction([anfis_forward(m, x)[0] for m in models])


class AnfisAdapter:
    def __init__(self, models):
        models = list(models)
        if len(models) != 4:
            raise ValueError("need one model per MPC parameter")
        self.models = models

    def predict(self, vx: float, wind: float, mu: float, y_ref: float) -> MpcParams:
        return adapt_parameters_anfis(self.models, np.array([vx, wind, mu, y_ref], float))

    @classmethod
    def train(cls, x, targets, cfg: HybridTrainConfig | None = None) -> tuple["AnfisAdapter", list[HybridResult]]:
        targets = np.asarray(targets, float)
        results = [train_anfis(x, targets[:, j], cfg, PARAM_NAMES[j]) for j in range(4)]
        return cls([r.model for r in results]), results

    def save(self, path) -> None:
        doc = {"format": FORMAT, "version": VERSION, "models": [model_to_dict(m) for m in self.models]}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "AnfisAdapter":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format") != FORMAT or doc.get("version") != VERSION:
            raise ValueError(f"{path}: not a version-{VERSION} {FORMAT} file")
        return cls([model_from_dict(d) for d in doc["models"]])
