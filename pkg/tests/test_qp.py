import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptive_mpc.qp import QpProblem, check_positive_definite, hildreth_solve, kkt_residuals


def random_feasible_qp(rng, n=None, m=None):
    n = n or int(rng.integers(1, 7))
    m = m or int(rng.integers(1, 11))
    a = rng.normal(size=(n, n))
    e = a @ a.T + 0.5 * np.eye(n)
    k = rng.normal(size=n) * 3.0
    mm = rng.normal(size=(m, n))
    x_feas = rng.normal(size=n) * 0.5
    gamma = mm @ x_feas + rng.uniform(0.05, 1.0, size=m)
    return QpProblem(e, k, mm, gamma)


def active_set_oracle(qp: QpProblem) -> np.ndarray:
    """Enumerate active sets; return the best KKT point (exact for small problems)."""
    n, m = qp.k.size, qp.gamma.size
    best, best_val = None, np.inf
    for r in range(0, min(n, m) + 1):
        for act in itertools.combinations(range(m), r):
            act = list(act)
            if act:
                ma = qp.m[act]
                kkt = np.block([[qp.e, ma.T], [ma, np.zeros((r, r))]])
                try:
                    sol = np.linalg.solve(kkt, np.r_[-qp.k, qp.gamma[act]])
                except np.linalg.LinAlgError:
                    continue
                x, lam = sol[:n], sol[n:]
                if np.any(lam < -1e-10):
                    continue
            else:
                x = np.linalg.solve(qp.e, -qp.k)
            if np.all(qp.m @ x <= qp.gamma + 1e-10):
                val = 0.5 * x @ qp.e @ x + qp.k @ x
                if val < best_val:
                    best, best_val = x, val
    return best


def test_unconstrained_minimum_returned_when_feasible():
    qp = QpProblem(np.eye(2), [-1.0, -1.0], [[1.0, 0.0]], [5.0])
    sol = hildreth_solve(qp)
    np.testing.assert_allclose(sol.x, [1.0, 1.0])
    assert sol.iterations == 0 and not sol.active.any()


def test_box_constrained_hand_solution():
    # min (x-2)^2 s.t. x <= 1  ->  x = 1, lambda = 2
    qp = QpProblem([[2.0]], [-4.0], [[1.0]], [1.0])
    sol = hildreth_solve(qp, tol=1e-14, max_iter=1000)
    assert sol.x[0] == pytest.approx(1.0, abs=1e-12)
    assert sol.lam[0] == pytest.approx(2.0, abs=1e-12)


def test_matches_active_set_oracle(rng):
    for _ in range(100):
        qp = random_feasible_qp(rng)
        sol = hildreth_solve(qp, tol=1e-12, max_iter=200000)
        np.testing.assert_allclose(sol.x, active_set_oracle(qp), atol=1e-6)


def test_iteration_cap_is_graceful():
    rng = np.random.default_rng(3)
    qp = random_feasible_qp(rng, 6, 10)
    sol = hildreth_solve(qp, tol=1e-16, max_iter=2)
    assert sol.iterations == 2 and not sol.converged and np.all(np.isfinite(sol.x))


def test_rejects_indefinite_hessian():
    with pytest.raises(np.linalg.LinAlgError):
        check_positive_definite(np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(np.linalg.LinAlgError):
        check_positive_definite(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_shape_validation():
    with pytest.raises(ValueError):
        QpProblem(np.eye(3), np.zeros(2), np.zeros((1, 2)), [1.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_kkt_conditions_hold(seed):
    qp = random_feasible_qp(np.random.default_rng(seed))
    sol = hildreth_solve(qp, tol=1e-12, max_iter=200000)
    res = kkt_residuals(qp, sol.x, sol.lam)
    assert res["dual"] == 0.0
    assert res["primal"] < 1e-7 and res["stationarity"] < 1e-7 and res["complementarity"] < 1e-7
