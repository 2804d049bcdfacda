'''
Dense numerical helpers shared by the estimation, control and trajectory
optimization modules: the double integrator state and its Euler step,
eigenvalue checks, the forward difference operator and the projection QP
solver.

The QP solver is an operator splitting (ADMM) method over the stacked
constraint form l <= C x <= u, followed by an active set polish step that
solves the reduced KKT system so returned solutions are accurate to machine
precision whenever the active set is identified.
'''

from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import logging
import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

# stands in for an infinite lower bound on inequality rows
INFINITY = 1e20


class NumericsError(RuntimeError):
    ''' Error raised for inconsistent dimensions or invalid numeric input'''
    pass


@dataclass
class AgentState:
    '''
    Double integrator state of a single agent, position and velocity in
    meters and m/s.
    '''
    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).reshape(3)
        self.v = np.asarray(self.v, dtype=float).reshape(3)

    def copy(self) -> AgentState:
        return AgentState(self.p.copy(), self.v.copy())


def euler_step(state: AgentState, accel: np.ndarray, dt: float) -> AgentState:
    if dt <= 0:
        raise NumericsError(f"Time step must be positive, got {dt}")
    accel = np.asarray(accel, dtype=float)
    return AgentState(state.p + state.v * dt, state.v + accel * dt)


def euler_step_swarm(
        p: np.ndarray,
        v: np.ndarray,
        accel: np.ndarray,
        dt: float) -> Tuple[np.ndarray, np.ndarray]:
    ''' vectorised euler_step over (N, 3) arrays '''
    if dt <= 0:
        raise NumericsError(f"Time step must be positive, got {dt}")
    return p + v * dt, v + accel * dt


def forward_difference_matrix(K: int, h: float, dims: int = 3) -> np.ndarray:
    '''
    Forward difference operator over a k-major, axis-minor stacked vector.

    Parameters:
        K (int): number of samples per axis
        h (float): sample spacing in seconds
        dims (int): number of axes per sample

    Returns:
        numpy array of shape (dims * (K - 1), dims * K) with
        (D x)_k = (x_{k+1} - x_k) / h per axis
    '''
    if K < 2:
        raise NumericsError(f"Forward difference needs K >= 2, got {K}")
    if h <= 0:
        raise NumericsError(f"Sample spacing must be positive, got {h}")
    d1 = (np.eye(K - 1, K, 1) - np.eye(K - 1, K)) / h
    return np.kron(d1, np.eye(dims))


def sym_eigenvalues(m: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    ''' ascending eigenvalues of a symmetric matrix '''
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NumericsError(f"Expected a square matrix, got shape {m.shape}")
    if m.size and np.max(np.abs(m - m.T)) > tol:
        raise NumericsError("Matrix is not symmetric")
    return scipy.linalg.eigvalsh(m)


def min_real_eigenvalue(m: np.ndarray) -> float:
    '''
    Smallest real part over the spectrum. Symmetric input goes through
    sym_eigenvalues; row scaled gain matrices are generally not symmetric.
    '''
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    if np.max(np.abs(m - m.T)) <= 1e-10:
        return float(sym_eigenvalues(m)[0])
    return float(np.min(scipy.linalg.eigvals(m).real))


class QpStatus(str, Enum):
    optimal = 'optimal'
    infeasible = 'infeasible'
    max_iter = 'max_iter'


@dataclass
class QpProblem:
    '''
    minimize 1/2 x^T Q x + q^T x  subject to  A_eq x = b_eq,  A_in x <= b_in
    '''
    Q: np.ndarray
    q: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    A_in: Optional[np.ndarray] = None
    b_in: Optional[np.ndarray] = None

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        n = self.q.shape[0]
        if self.Q.shape != (n, n):
            raise NumericsError(
                f"Cost matrix shape {self.Q.shape} does not match {n} variables")
        if np.max(np.abs(self.Q - self.Q.T), initial=0.0) > 1e-10:
            raise NumericsError("Cost matrix is not symmetric")

        self.A_eq, self.b_eq = self._block(self.A_eq, self.b_eq, n, 'equality')
        self.A_in, self.b_in = self._block(self.A_in, self.b_in, n, 'inequality')

        for name, arr in (('Q', self.Q), ('q', self.q), ('A_eq', self.A_eq),
                          ('b_eq', self.b_eq), ('A_in', self.A_in),
                          ('b_in', self.b_in)):
            if not np.all(np.isfinite(arr)):
                raise NumericsError(f"{name} contains non finite entries")

    @staticmethod
    def _block(a, b, n, label):
        if a is None:
            return np.zeros((0, n)), np.zeros(0)
        a = np.atleast_2d(np.asarray(a, dtype=float))
        if a.size == 0:
            a = a.reshape(0, n)
        b = np.asarray(b, dtype=float).reshape(-1)
        if a.shape[1] != n or a.shape[0] != b.shape[0]:
            raise NumericsError(
                f"Inconsistent {label} block: A {a.shape}, b {b.shape}, "
                f"{n} variables")
        return a, b

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.Q @ x + self.q @ x)

    def violation(self, x: np.ndarray) -> Tuple[float, float]:
        ''' (max equality residual, max inequality excess), 0 when empty '''
        eq = np.max(np.abs(self.A_eq @ x - self.b_eq), initial=0.0)
        ineq = np.max(self.A_in @ x - self.b_in, initial=0.0)
        return float(eq), float(max(ineq, 0.0))

    def with_cost(self, Q: np.ndarray, q: np.ndarray) -> QpProblem:
        return QpProblem(Q, q, self.A_eq, self.b_eq, self.A_in, self.b_in)


@dataclass
class QpSolution:
    x: np.ndarray
    status: QpStatus
    primal_residual: float
    dual_residual: float
    iterations: int
    polished: bool = False
    y_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y_in: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def ok(self) -> bool:
        return self.status == QpStatus.optimal


def _feasibility_tol(p: QpProblem, tol: float) -> float:
    scale = max(
        1.0,
        np.max(np.abs(p.b_eq), initial=0.0),
        np.max(np.abs(p.b_in), initial=0.0))
    return max(10.0 * tol, 1e-9) * scale


def _kkt_solve(Q, q, M, b) -> Tuple[np.ndarray, np.ndarray]:
    n = Q.shape[0]
    m = M.shape[0]
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = Q
    kkt[:n, n:] = M.T
    kkt[n:, :n] = M
    rhs = np.concatenate([-q, b])
    sol, _, _, _ = scipy.linalg.lstsq(kkt, rhs, lapack_driver='gelsd')
    return sol[:n], sol[n:]


def _stationarity(p: QpProblem, x, y_eq, y_in) -> float:
    r = p.Q @ x + p.q + p.A_eq.T @ y_eq + p.A_in.T @ y_in
    return float(np.max(np.abs(r), initial=0.0))


def _polish(
        p: QpProblem,
        active: np.ndarray,
        feas_tol: float,
        max_refine: int) -> Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    '''
    Solves the KKT system restricted to the guessed active set, then adds the
    most violated inactive row and drops the most negative multiplier until
    the KKT conditions hold.
    '''
    active = active.copy()
    m_eq = p.A_eq.shape[0]
    dual_tol = 1e-7 * max(1.0, np.max(np.abs(p.q), initial=0.0))

    for _ in range(max_refine):
        rows = np.flatnonzero(active)
        M = np.vstack([p.A_eq, p.A_in[rows]])
        b = np.concatenate([p.b_eq, p.b_in[rows]])
        x, lam = _kkt_solve(p.Q, p.q, M, b)
        y_eq = lam[:m_eq]
        y_in = np.zeros(p.A_in.shape[0])
        y_in[rows] = lam[m_eq:]

        excess = p.A_in @ x - p.b_in
        excess[rows] = -np.inf
        eq_res = np.max(np.abs(p.A_eq @ x - p.b_eq), initial=0.0)
        worst_excess = np.max(excess, initial=-np.inf)
        worst_dual = np.min(y_in[rows], initial=0.0)

        primal_ok = worst_excess <= feas_tol and eq_res <= feas_tol
        dual_ok = worst_dual >= -dual_tol
        if primal_ok and dual_ok:
            if _stationarity(p, x, y_eq, y_in) <= dual_tol * 10:
                return x, y_eq, np.maximum(y_in, 0.0)
            return None

        if not dual_ok:
            active[rows[np.argmin(y_in[rows])]] = False
        if worst_excess > feas_tol:
            active[int(np.argmax(excess))] = True
    return None


def solve_qp(
        p: QpProblem,
        warm_start: Optional[np.ndarray] = None,
        tol: float = 1e-8,
        max_iter: int = 20000,
        rho: float = 0.1,
        sigma: float = 1e-6,
        alpha: float = 1.6,
        check_every: int = 25,
        max_refine: int = 50) -> QpSolution:
    '''
    Solves a convex QP.

    Parameters:
        p (QpProblem): problem to solve
        warm_start (numpy): optional starting primal point
        tol (float): target tolerance, feasibility is accepted at
            10 * tol scaled by the largest right hand side entry
        max_iter (int): ADMM iteration cap
        rho, sigma, alpha: ADMM penalty, regularisation and relaxation

    Returns:
        QpSolution, status infeasible when a primal infeasibility certificate
        persists past max_iter / 2
    '''
    n = p.n
    m_eq = p.A_eq.shape[0]
    m_in = p.A_in.shape[0]
    feas_tol = _feasibility_tol(p, tol)

    if m_in == 0:
        x, y_eq = _kkt_solve(p.Q, p.q, p.A_eq, p.b_eq)
        primal = float(np.max(np.abs(p.A_eq @ x - p.b_eq), initial=0.0))
        dual = _stationarity(p, x, y_eq, np.zeros(0))
        if primal > feas_tol:
            logger.debug(f"Equality constrained QP inconsistent, residual {primal}")
            return QpSolution(x, QpStatus.infeasible, primal, dual, 0, False, y_eq)
        if dual > 1e-6 * max(1.0, np.max(np.abs(p.q), initial=0.0)):
            raise NumericsError("QP is unbounded below on its feasible set")
        return QpSolution(x, QpStatus.optimal, primal, dual, 0, True, y_eq)

    C = np.vstack([p.A_eq, p.A_in])
    lower = np.concatenate([p.b_eq, np.full(m_in, -INFINITY)])
    upper = np.concatenate([p.b_eq, p.b_in])
    is_eq = np.arange(m_eq + m_in) < m_eq

    def rho_vector(r):
        return np.where(is_eq, 1e3 * r, r)

    def factor(rho_vec):
        kkt = p.Q + sigma * np.eye(n) + C.T @ (rho_vec[:, None] * C)
        return scipy.linalg.cho_factor(kkt)

    rho_vec = rho_vector(rho)
    chol = factor(rho_vec)

    x = np.zeros(n) if warm_start is None else np.asarray(warm_start, dtype=float).copy()
    z = np.clip(C @ x, lower, upper)
    y = np.zeros(m_eq + m_in)

    polish_eps = 1e-4
    eps_pinf = 1e-5
    primal = dual = np.inf

    for it in range(1, max_iter + 1):
        rhs = sigma * x - p.q + C.T @ (rho_vec * z - y)
        x_tilde = scipy.linalg.cho_solve(chol, rhs)
        z_tilde = C @ x_tilde
        x_new = alpha * x_tilde + (1.0 - alpha) * x
        z_relax = alpha * z_tilde + (1.0 - alpha) * z
        z_new = np.clip(z_relax + y / rho_vec, lower, upper)
        y_new = y + rho_vec * (z_relax - z_new)
        delta_y = y_new - y
        x, z, y = x_new, z_new, y_new

        if it % check_every != 0 and it != max_iter:
            continue

        cx = C @ x
        cty = C.T @ y
        qx = p.Q @ x
        primal = float(np.max(np.abs(cx - z)))
        dual = float(np.max(np.abs(qx + p.q + cty)))
        norm_p = max(np.max(np.abs(cx)), np.max(np.abs(z)))
        norm_d = max(np.max(np.abs(qx)), np.max(np.abs(cty)), np.max(np.abs(p.q)))

        if primal <= polish_eps * (1 + norm_p) and dual <= polish_eps * (1 + norm_d):
            active = (upper[m_eq:] - z[m_eq:]) < y[m_eq:]
            polished = _polish(p, active, feas_tol, max_refine)
            if polished is not None:
                xp, y_eq, y_in = polished
                pr = max(p.violation(xp))
                du = _stationarity(p, xp, y_eq, y_in)
                logger.debug(f"QP polished after {it} iterations")
                return QpSolution(xp, QpStatus.optimal, pr, du, it, True, y_eq, y_in)
            polish_eps = max(polish_eps * 0.1, 1e-12)

        if primal <= tol * (1 + norm_p) and dual <= tol * (1 + norm_d) \
                and max(p.violation(x)) <= feas_tol:
            return QpSolution(
                x, QpStatus.optimal, primal, dual, it, False, y[:m_eq], y[m_eq:])

        if it >= max_iter // 2:
            dy_norm = np.max(np.abs(delta_y))
            if dy_norm > 1e-14:
                v = delta_y / dy_norm
                support = upper @ np.maximum(v, 0.0) + lower @ np.minimum(v, 0.0)
                if np.max(np.abs(C.T @ v)) < eps_pinf and support < -eps_pinf:
                    logger.debug(f"QP infeasibility certificate at iteration {it}")
                    return QpSolution(x, QpStatus.infeasible, primal, dual, it)

        # rebalance the penalty when the residuals drift apart
        if primal < 1e-14 or dual < 1e-14:
            continue
        ratio = np.sqrt(
            (primal / max(norm_p, 1e-12)) / (dual / max(norm_d, 1e-12)))
        if ratio > 5.0 or ratio < 0.2:
            rho = float(np.clip(rho * ratio, 1e-6, 1e6))
            rho_vec = rho_vector(rho)
            chol = factor(rho_vec)

    logger.warning(
        f"QP stopped at {max_iter} iterations, primal {primal:.3e}, dual {dual:.3e}")
    return QpSolution(
        x, QpStatus.max_iter, primal, dual, max_iter, False, y[:m_eq], y[m_eq:])


def project_onto(
        p: QpProblem,
        x0: np.ndarray,
        **kwargs) -> QpSolution:
    '''
    Euclidean projection of x0 onto the feasible set of `p`, the cost of `p`
    is replaced with ||x - x0||^2.
    '''
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    projection = p.with_cost(2.0 * np.eye(p.n), -2.0 * x0)
    return solve_qp(projection, warm_start=x0, **kwargs)
