"""Inequality-constrained convex QP solved with Hildreth's dual coordinate ascent.

Problem form::

    min 0.5 x'Ex + x'K   s.t.  Mx <= gamma

with E symmetric positive definite.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit


@dataclass
class QpProblem:
    e: np.ndarray
    k: np.ndarray
    m: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.e = np.asarray(self.e, dtype=float)
        self.k = np.asarray(self.k, dtype=float).reshape(-1)
        n = self.k.size
        self.m = np.asarray(self.m, dtype=float).reshape(-1, n)
        self.gamma = np.asarray(self.gamma, dtype=float).reshape(-1)
        if self.e.shape != (n, n):
            raise ValueError(f"Hessian shape {self.e.shape} does not match {n} variables")
        if self.m.shape[0] != self.gamma.size:
            raise ValueError("constraint matrix and bound vector disagree in row count")


@dataclass
class QpSolution:
    x: np.ndarray
    lam: np.ndarray
    iterations: int
    converged: bool
    active: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


@njit(cache=True)
def _dual_ascent(h, d, tol, max_iter):
    n = d.shape[0]
    lam = np.zeros(n)
    for it in range(1, max_iter + 1):
        change = 0.0
        for i in range(n):
            s = d[i]
            for j in range(n):
                if j != i:
                    s += h[i, j] * lam[j]
            w = -s / h[i, i]
            if w < 0.0:
                w = 0.0
            dl = abs(w - lam[i])
            if dl > change:
                change = dl
            lam[i] = w
        if change < tol:
            return lam, it, True
    return lam, max_iter, False


def check_positive_definite(e: np.ndarray) -> None:
    if not np.allclose(e, e.T, atol=1e-10 * max(1.0, np.abs(e).max())):
        raise np.linalg.LinAlgError("QP Hessian is not symmetric")
    try:
        np.linalg.cholesky(e)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("QP Hessian is not positive definite") from exc


def hildreth_solve(qp: QpProblem, tol: float = 1e-8, max_iter: int = 200,
                   e_inv: np.ndarray | None = None, h: np.ndarray | None = None) -> QpSolution:
    """Solve ``qp``; returns the unconstrained minimum when it is already feasible.

    ``e_inv`` and ``h = M E^-1 M'`` may be passed in when the caller caches them
    across solves with the same Hessian and constraint matrix. Hitting
    ``max_iter`` is not an error: the approximate solution is returned with
    ``converged=False``.
    """
    if e_inv is None:
        check_positive_definite(qp.e)
        e_inv = np.linalg.inv(qp.e)
    x = -e_inv @ qp.k
    ncon = qp.gamma.size
    if ncon == 0 or np.all(qp.m @ x <= qp.gamma):
        return QpSolution(x, np.zeros(ncon), 0, True, np.zeros(ncon, dtype=bool))

    if h is None:
        h = qp.m @ e_inv @ qp.m.T
    d = qp.gamma + qp.m @ e_inv @ qp.k
    lam, iterations, converged = _dual_ascent(np.ascontiguousarray(h), d, float(tol), int(max_iter))
    x = -e_inv @ (qp.k + qp.m.T @ lam)
    return QpSolution(x, lam, iterations, converged, lam > 0.0)


def kkt_residuals(qp: QpProblem, x: np.ndarray, lam: np.ndarray) -> dict[str, float]:
    slack = qp.m @ x - qp.gamma
    return {
        "stationarity": float(np.max(np.abs(qp.e @ x + qp.k + qp.m.T @ lam), initial=0.0)),
        "primal": float(np.max(slack, initial=0.0)),
        "dual": float(np.max(-lam, initial=0.0)),
        "complementarity": float(np.max(np.abs(lam * slack), initial=0.0)),
    }
