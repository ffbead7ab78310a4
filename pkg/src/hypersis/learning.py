"""Recovering curing and infection rates from a trajectory.

With known adjacency tensors the update of agent ``i`` is linear in its rates:

    x_i(t+1) - x_i(t) = [-h x_i,  h(1-x_i) sum_j A_ij x_j,  h(1-x_i) sum_jk A_ijk x_j x_k] . theta_i

where ``theta_i = (delta_i, mu_i, mu_i3)``. Stacking ``m`` steps from ``q`` on gives
``Phi_i theta_i = eta_i``, solved by nonnegative least squares per node. Orders above
three add one column each (``h(1-x_i) A_k x^{k-1}``); that extension is experimental.

The model assumes ``beta_ij = mu_i A_ij``. If a node's true rates are not proportional
to its weights the fit is misspecified and only the residual reveals it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from .hypergraph import DirectedHypergraph, adjacency_tensors

__all__ = [
    "LearningProblem",
    "RankReport",
    "NodeFit",
    "LearnedParams",
    "regressors",
    "build_problem",
    "rank_check",
    "nnls",
    "solve_nnls",
    "learn_all",
]

RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class LearningProblem:
    node: int
    h: float
    q: int
    m: int
    Phi: np.ndarray
    eta: np.ndarray
    orders: tuple[int, ...] = (3,)

    @property
    def columns(self) -> tuple[str, ...]:
        return ("delta", "mu2", *(f"mu{k}" for k in self.orders))


def _states(traj) -> np.ndarray:
    X = np.asarray(getattr(traj, "states", traj), dtype=float)
    if X.ndim != 2:
        raise ValueError("expected single-virus states of shape (T+1, n)")
    return X


def regressors(traj, hypergraph: DirectedHypergraph, h: float, q: int, m: int, orders=None):
    """Regressor blocks for every node at once.

    Returns ``(Phi, eta, orders)`` with ``Phi`` of shape ``(n, m, 2 + len(orders))`` and
    ``eta`` of shape ``(n, m)``.
    """
    X = _states(traj)
    n = X.shape[1]
    if n != hypergraph.n:
        raise ValueError(f"trajectory has {n} agents, hypergraph has {hypergraph.n}")
    if q < 0 or m < 1 or q + m > X.shape[0] - 1:
        raise ValueError(f"window q={q}, m={m} does not fit a trajectory of {X.shape[0] - 1} steps")
    if orders is None:
        orders = tuple(range(3, max(3, hypergraph.max_order) + 1))
    orders = tuple(int(k) for k in orders)
    A = adjacency_tensors(hypergraph, max(2, *orders) if orders else 2)
    W = X[q : q + m]
    eta = (X[q + 1 : q + m + 1] - W).T
    s = h * (1.0 - W)
    cols = [-h * W, s * (W @ A[2].to_dense().T)]
    for k in orders:
        T = A[k]
        if not T.nnz:
            cols.append(np.zeros_like(W))
            continue
        ind = csr_matrix(
            (np.ones(T.nnz), (np.arange(T.nnz), T.indices[:, 0])), shape=(T.nnz, n)
        )
        prods = T.values * np.prod(W[:, T.indices[:, 1:]], axis=2)
        cols.append(s * np.asarray((ind.T @ prods.T).T))
    Phi = np.stack(cols, axis=2).transpose(1, 0, 2)
    return Phi, eta, orders


def build_problem(traj, hypergraph: DirectedHypergraph, h: float, q: int, m: int, node: int, orders=None) -> LearningProblem:
    """Regressor ``Phi`` (``m`` rows, one column per rate) and target ``eta`` for one node."""
    if not 0 <= node < hypergraph.n:
        raise ValueError(f"node {node} out of range")
    Phi, eta, orders = regressors(traj, hypergraph, h, q, m, orders)
    return LearningProblem(node, h, q, m, Phi[node].copy(), eta[node].copy(), orders)


@dataclass(frozen=True)
class RankReport:
    rank_ok: bool
    sigma_min: float
    condition: float
    zero_columns: tuple[int, ...] = ()


def rank_check(problem: LearningProblem | np.ndarray, tol: float = RANK_TOL) -> RankReport:
    """Full-column-rank decision from the normal matrix ``Phi^T Phi``.

    Columns are scaled to unit norm first so the decision does not depend on units.
    ``sigma_min`` is the smallest singular value of the unscaled ``Phi``; the rank is
    accepted when the scaled normal matrix has ``lambda_min / lambda_max > tol``.
    """
    Phi = problem.Phi if isinstance(problem, LearningProblem) else np.asarray(problem, dtype=float)
    G = Phi.T @ Phi
    norms = np.sqrt(np.diag(G))
    zero = tuple(int(j) for j in np.nonzero(norms == 0)[0])
    lam = np.linalg.eigvalsh(G)
    sigma_min = float(math.sqrt(max(lam[0], 0.0)))
    if zero or Phi.shape[0] < Phi.shape[1]:
        return RankReport(False, sigma_min, math.inf, zero)
    Gs = G / np.outer(norms, norms)
    ls = np.linalg.eigvalsh(Gs)
    cond = math.inf if ls[0] <= 0 else float(ls[-1] / ls[0])
    return RankReport(bool(ls[0] > tol * ls[-1]), sigma_min, cond, zero)


class NNLSBreakdown(RuntimeError):
    def __init__(self, message: str, iterate: np.ndarray):
        super().__init__(message)
        self.iterate = iterate


def nnls(A, b, max_iter: int | None = None, tol: float | None = None) -> np.ndarray:
    """Lawson–Hanson active-set solver for ``min ||A x - b||`` subject to ``x >= 0``.

    Least-squares subproblems on the passive set use ``lstsq``, so rank-deficient
    problems return a minimum-norm passive solution.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, p = A.shape
    if max_iter is None:
        max_iter = 30 * max(p, 1)
    if tol is None:
        tol = 10.0 * np.finfo(float).eps * max(m, p) * np.linalg.norm(A, 1) * np.abs(b).max(initial=0.0)
    x = np.zeros(p)
    passive = np.zeros(p, dtype=bool)
    w = A.T @ (b - A @ x)
    it = 0
    while (~passive).any() and w[~passive].max() > tol:
        j = int(np.argmax(np.where(passive, -np.inf, w)))
        passive[j] = True
        while True:
            it += 1
            if it > max_iter:
                raise NNLSBreakdown("active-set iteration limit reached", x)
            z = np.zeros(p)
            z[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
            if np.all(z[passive] > 0):
                break
            neg = np.nonzero(passive & (z <= 0))[0]
            ratios = x[neg] / (x[neg] - z[neg])
            k = int(np.argmin(ratios))
            x = x + ratios[k] * (z - x)
            x[neg[k]] = 0.0
            passive &= x > 0
            x[~passive] = 0.0
        x = z
        w = A.T @ (b - A @ x)
    return x


@dataclass(frozen=True, eq=False)
class NodeFit:
    node: int
    theta: np.ndarray
    residual: float
    rank: RankReport
    kkt: float
    flags: tuple[str, ...] = ()
    error: str | None = None

    @property
    def rank_ok(self) -> bool:
        return self.rank.rank_ok

    def to_dict(self) -> dict:
        return {
            "node": self.node + 1,
            "theta": [float(v) for v in self.theta],
            "residual": float(self.residual),
            "rank_ok": bool(self.rank.rank_ok),
            "sigma_min": float(self.rank.sigma_min),
            "condition": self.rank.condition if math.isfinite(self.rank.condition) else None,
            "zero_columns": list(self.rank.zero_columns),
            "kkt": float(self.kkt),
            "flags": list(self.flags),
            "error": self.error,
        }


def _kkt_residual(A: np.ndarray, b: np.ndarray, x: np.ndarray) -> float:
    g = A.T @ (A @ x - b)
    free = x > 0
    r_free = np.abs(g[free]).max() if free.any() else 0.0
    r_bound = max(0.0, -g[~free].min()) if (~free).any() else 0.0
    return float(max(r_free, r_bound))


def solve_nnls(problem: LearningProblem) -> NodeFit:
    """Nonnegative least-squares fit of one node's rates with diagnostics."""
    rank = rank_check(problem)
    theta = nnls(problem.Phi, problem.eta)
    flags = []
    if not rank.rank_ok:
        flags.append("rank deficient: solution is not unique")
    if theta[0] <= 0:
        flags.append("zero curing rate")
    r = float(np.linalg.norm(problem.Phi @ theta - problem.eta))
    return NodeFit(problem.node, theta, r, rank, _kkt_residual(problem.Phi, problem.eta, theta), tuple(flags))


@dataclass(frozen=True, eq=False)
class LearnedParams:
    h: float
    delta: np.ndarray
    mu2: np.ndarray
    mu_higher: dict
    fits: tuple[NodeFit, ...]

    @property
    def mu3(self) -> np.ndarray:
        return self.mu_higher.get(3, np.zeros_like(self.delta))

    @property
    def rank_ok(self) -> bool:
        return all(f.rank_ok for f in self.fits)

    def to_dict(self) -> dict:
        d = {"delta": self.delta.tolist(), "h": self.h, "mu2": self.mu2.tolist(), "mu3": self.mu3.tolist()}
        extra = {str(k): v.tolist() for k, v in self.mu_higher.items() if k > 3}
        if extra:
            d["muK"] = extra
        d["diagnostics"] = [f.to_dict() for f in self.fits]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def learn_all(traj, hypergraph: DirectedHypergraph, h: float, q: int = 0, m: int | None = None, orders=None) -> LearnedParams:
    """Fit every node; a failing node is recorded with NaN rates and does not stop the rest."""
    X = _states(traj)
    if m is None:
        m = X.shape[0] - 1 - q
    Phi, eta, orders = regressors(X, hypergraph, h, q, m, orders)
    n, p = hypergraph.n, Phi.shape[2]
    fits = []
    for i in range(n):
        prob = LearningProblem(i, h, q, m, Phi[i], eta[i], orders)
        try:
            fits.append(solve_nnls(prob))
        except (NNLSBreakdown, np.linalg.LinAlgError) as exc:
            theta = getattr(exc, "iterate", np.full(p, np.nan))
            fits.append(
                NodeFit(i, np.asarray(theta, dtype=float), math.nan, rank_check(prob), math.nan, ("solver failure",), str(exc))
            )
    theta = np.array([f.theta for f in fits])
    mu_higher = {k: theta[:, 2 + j].copy() for j, k in enumerate(orders)}
    return LearnedParams(h, theta[:, 0].copy(), theta[:, 1].copy(), mu_higher, tuple(fits))
