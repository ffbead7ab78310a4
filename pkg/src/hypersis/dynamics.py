"""Discrete-time mean-field SIS maps on hypergraphs.

The single-virus update is

    x+ = x + h * (-D x + (1 - x) * (B x + sum_k F_k x^{k-1}))

where ``D`` holds the curing rates, ``B`` the pairwise infection rates and each
``F_k`` the order-``k`` infection rates (``H`` when only third-order edges exist).
The bi-virus model runs two such processes that share the susceptible fraction
``1 - x1 - x2``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix

from .hypergraph import DirectedHypergraph, adjacency_tensors
from .tensor import (
    SparseCubicalTensor,
    almost_symmetrize,
    is_irreducible,
    tensor_vector_power,
)

__all__ = [
    "GeneralParams",
    "SisParams",
    "BiVirusParams",
    "Trajectory",
    "Check",
    "AssumptionReport",
    "AssumptionViolation",
    "NotConverged",
    "validate_assumptions",
    "step",
    "step_general",
    "step_bivirus",
    "step_many",
    "simulate",
    "run_to_rest",
    "fixed_point_map",
    "find_equilibrium",
    "error_dynamics_tensors",
    "error_dynamics_general",
    "evaluate_polynomial_map",
    "cluster_states",
]


class AssumptionViolation(ValueError):
    """Raised when a state or parameter set breaks the well-posedness conditions."""

    def __init__(self, message: str, report: AssumptionReport | None = None):
        super().__init__(message)
        self.report = report


class NotConverged(RuntimeError):
    def __init__(self, message: str, best, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3g} after {iterations} iterations)")
        self.best = best
        self.residual = residual
        self.iterations = iterations


class NotAnEquilibrium(ValueError):
    pass


def _frozen_vector(v, n: int | None = None, name: str = "vector") -> np.ndarray:
    arr = np.array(v, dtype=float).reshape(-1)
    if n is not None and arr.shape != (n,):
        raise ValueError(f"{name} must have length {n}, got {arr.shape[0]}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GeneralParams:
    """Curing rates, pairwise rates ``B`` and higher-order rate tensors ``F[k]``.

    Every ``F[k]`` is almost-symmetrized on construction; this leaves the dynamics
    unchanged and makes the tensor representation unique.
    """

    delta: np.ndarray
    B: SparseCubicalTensor
    F: Mapping[int, SparseCubicalTensor] = field(default_factory=dict)
    h: float = 0.01

    def __post_init__(self):
        delta = _frozen_vector(self.delta, name="delta")
        n = delta.shape[0]
        if self.B.order != 2 or self.B.dim != n:
            raise ValueError(f"B must be an order-2 tensor of dimension {n}")
        F = {}
        for k, T in sorted(self.F.items()):
            k = int(k)
            if k < 3 or T.order != k or T.dim != n:
                raise ValueError(f"F[{k}] must be an order-{k} tensor of dimension {n}")
            F[k] = almost_symmetrize(T)
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"sampling step h must be positive, got {self.h}")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "h", float(self.h))

    @property
    def n(self) -> int:
        return self.delta.shape[0]

    @property
    def max_order(self) -> int:
        return max(self.F, default=2)

    def higher(self, k: int) -> SparseCubicalTensor:
        return self.F.get(k, SparseCubicalTensor(k, self.n))

    @functools.cached_property
    def B_dense(self) -> np.ndarray:
        M = self.B.to_dense()
        M.setflags(write=False)
        return M

    @functools.cached_property
    def _kernels(self) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        return [(T.indices[:, 0], T.indices[:, 1:], T.values) for T in self.F.values() if T.nnz]

    def infection(self, x: np.ndarray) -> np.ndarray:
        """Infection pressure ``B x + sum_k F_k x^{k-1}``."""
        out = self.B_dense @ x
        for first, rest, vals in self._kernels:
            out += np.bincount(first, weights=vals * np.prod(x[rest], axis=1), minlength=self.n)
        return out

    @functools.cached_property
    def _scatter(self) -> list:
        out = []
        for first, _, vals in self._kernels:
            out.append(csr_matrix((np.ones(vals.size), (first, np.arange(vals.size))), shape=(self.n, vals.size)))
        return out

    def infection_many(self, X: np.ndarray) -> np.ndarray:
        """Row-wise :meth:`infection` for a stack of states ``X`` of shape ``(m, n)``."""
        out = X @ self.B_dense.T
        for (_, rest, vals), S in zip(self._kernels, self._scatter):
            w = vals * np.prod(X[:, rest], axis=2)
            out += (S @ w.T).T
        return out

    def pairwise_row_sums(self) -> np.ndarray:
        return self.B.row_sums()

    def higher_row_sums(self) -> np.ndarray:
        out = np.zeros(self.n)
        for T in self.F.values():
            out += T.row_sums()
        return out

    def as_general(self) -> GeneralParams:
        return self

    @classmethod
    def from_rates(
        cls,
        hypergraph: DirectedHypergraph,
        delta: Sequence[float],
        mu2: Sequence[float],
        mu_higher: Mapping[int, Sequence[float]] | None = None,
        h: float = 0.01,
    ) -> GeneralParams:
        """Build rate tensors as ``beta[i, ...] = mu_k[i] * A_k[i, ...]``."""
        mu_higher = {int(k): v for k, v in (mu_higher or {}).items()}
        top = max([hypergraph.max_order, *mu_higher.keys(), 2])
        A = adjacency_tensors(hypergraph, top)
        n = hypergraph.n
        B = A[2].scale_rows(_frozen_vector(mu2, n, "mu2"))
        F = {}
        for k in range(3, top + 1):
            if A[k].nnz and k not in mu_higher:
                raise ValueError(f"hypergraph has order-{k} edges but no rates were given for them")
            if k in mu_higher:
                F[k] = A[k].scale_rows(_frozen_vector(mu_higher[k], n, f"mu{k}"))
        return cls(_frozen_vector(delta, n, "delta"), B, F, h)


class SisParams(GeneralParams):
    """Parameters of the model with pairwise and third-order edges only."""

    def __init__(self, delta, B: SparseCubicalTensor, H: SparseCubicalTensor | None = None, h: float = 0.01):
        n = len(np.asarray(delta).reshape(-1))
        if H is None:
            H = SparseCubicalTensor(3, n)
        if H.order != 3:
            raise ValueError("H must be an order-3 tensor")
        super().__init__(delta, B, {3: H}, h)

    @property
    def H(self) -> SparseCubicalTensor:
        return self.F[3]

    def __repr__(self) -> str:
        return f"SisParams(n={self.n}, h={self.h}, nnz(B)={self.B.nnz}, nnz(H)={self.H.nnz})"

    @classmethod
    def from_rates(cls, hypergraph, delta, mu2, mu3=None, h: float = 0.01) -> SisParams:  # type: ignore[override]
        n = hypergraph.n
        if mu3 is None:
            mu3 = np.zeros(n)
        if hypergraph.max_order > 3:
            raise ValueError("SisParams supports pairwise and third-order edges only")
        g = GeneralParams.from_rates(hypergraph, delta, mu2, {3: mu3}, h)
        return cls(g.delta, g.B, g.higher(3), h)

    @classmethod
    def from_general(cls, params: GeneralParams) -> SisParams:
        if params.max_order > 3:
            raise ValueError("parameters carry tensors of order > 3")
        return cls(params.delta, params.B, params.higher(3), params.h)


@dataclass(frozen=True, eq=False)
class BiVirusParams:
    virus1: SisParams
    virus2: SisParams

    def __post_init__(self):
        if self.virus1.n != self.virus2.n:
            raise ValueError("both viruses must live on the same number of agents")
        if self.virus1.h != self.virus2.h:
            raise ValueError("both viruses must share the sampling step h")

    @property
    def n(self) -> int:
        return self.virus1.n

    @property
    def h(self) -> float:
        return self.virus1.h

    @property
    def viruses(self) -> tuple[SisParams, SisParams]:
        return (self.virus1, self.virus2)


# -- assumptions ------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    holds: bool
    margin: float

    def to_dict(self) -> dict:
        return {"name": self.name, "holds": bool(self.holds), "margin": _json_float(self.margin)}


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass(frozen=True)
class AssumptionReport:
    mode: str
    checks: tuple[Check, ...]

    @property
    def ok(self) -> bool:
        return all(c.holds for c in self.checks)

    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.holds]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "ok": self.ok, "checks": [c.to_dict() for c in self.checks]}


_MODES = {"weak": "weak", "a": "weak", "A3a": "weak", "strict": "strict", "b": "strict", "A3b": "strict"}


def _mode(mode: str) -> str:
    try:
        return _MODES[mode]
    except KeyError:
        raise ValueError(f"mode must be 'weak' or 'strict', got {mode!r}") from None


def _rate_checks(p: GeneralParams, mode: str, prefix: str = "") -> list[Check]:
    checks = [
        Check(f"{prefix}curing rates positive", bool(np.all(p.delta > 0)), float(p.delta.min())),
        Check(
            f"{prefix}B nonnegative",
            p.B.is_nonnegative(),
            float(p.B.values.min()) if p.B.nnz else 0.0,
        ),
        Check(f"{prefix}B irreducible", is_irreducible(p.B), math.nan),
    ]
    for k, T in p.F.items():
        checks.append(
            Check(
                f"{prefix}F{k} nonnegative",
                T.is_nonnegative(),
                float(T.values.min()) if T.nnz else 0.0,
            )
        )
    return checks


def _single_bound_checks(p: GeneralParams, mode: str) -> list[Check]:
    rows = p.pairwise_row_sums() + p.higher_row_sums()
    if mode == "weak":
        m1 = 1.0 - p.h * float(p.delta.max())
        m2 = 1.0 - p.h * float(rows.max())
        return [
            Check("h*delta <= 1", m1 >= 0, m1),
            Check("h*(pairwise + higher row sums) <= 1", m2 >= 0, m2),
        ]
    m = 1.0 - p.h * float((p.delta + rows).max())
    return [Check("h*(delta + pairwise + higher row sums) < 1", m > 0, m)]


def _box_check(x, n: int, name: str = "x0 in [0,1]^n") -> Check:
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        return Check(name, False, math.nan)
    margin = float(min(x.min(), 1.0 - x.max()))
    return Check(name, margin >= 0, margin)


def validate_assumptions(params, mode: str = "weak", x0=None) -> AssumptionReport:
    """Itemized check of the well-posedness conditions.

    ``mode="weak"`` checks ``h*delta_i <= 1`` and ``h*(row sums) <= 1``; ``"strict"``
    checks the combined strict bound ``h*(delta_i + row sums) < 1``. For bi-virus
    parameters ``x0`` is a pair ``(x1, x2)`` and the row-sum bounds add both viruses.
    Each check carries a margin (positive means satisfied with room to spare).
    """
    mode = _mode(mode)
    if isinstance(params, BiVirusParams):
        return _validate_bivirus(params, mode, x0)
    checks = []
    if x0 is not None:
        checks.append(_box_check(x0, params.n))
    checks += _rate_checks(params, mode)
    checks += _single_bound_checks(params, mode)
    return AssumptionReport(mode, tuple(checks))


def _validate_bivirus(params: BiVirusParams, mode: str, x0) -> AssumptionReport:
    n, h = params.n, params.h
    checks = []
    if x0 is not None:
        x1, x2 = (np.asarray(v, dtype=float) for v in x0)
        if x1.shape != (n,) or x2.shape != (n,):
            checks.append(Check("(x1, x2) in simplex set", False, math.nan))
        else:
            s = x1 + x2
            margin = float(min(x1.min(), x2.min(), 1.0 - s.max()))
            checks.append(Check("(x1, x2) in simplex set", margin >= 0, margin))
    for ell, p in enumerate(params.viruses, start=1):
        checks += _rate_checks(p, mode, prefix=f"virus {ell}: ")
    rows = sum(p.pairwise_row_sums() + p.higher_row_sums() for p in params.viruses)
    dmax = np.maximum(params.virus1.delta, params.virus2.delta)
    if mode == "weak":
        m1 = 1.0 - h * float(dmax.max())
        m2 = 1.0 - h * float(rows.max())
        checks += [
            Check("h*delta_l <= 1 for both viruses", m1 >= 0, m1),
            Check("h*(row sums of both viruses) <= 1", m2 >= 0, m2),
        ]
    else:
        m = 1.0 - h * float((dmax + rows).max())
        checks.append(Check("h*(delta_l + row sums of both viruses) < 1", m > 0, m))
    return AssumptionReport(mode, tuple(checks))


def _require_weak_bounds(params) -> None:
    report = validate_assumptions(params, "weak")
    bad = [c for c in report.checks if not c.holds and "irreducible" not in c.name]
    if bad:
        names = ", ".join(c.name for c in bad)
        raise AssumptionViolation(f"parameters violate: {names}", report)


# -- update maps ------------------------------------------------------------------------


def _step_raw(params: GeneralParams, x: np.ndarray) -> np.ndarray:
    return x + params.h * (-params.delta * x + (1.0 - x) * params.infection(x))


def step_many(params: GeneralParams, X) -> np.ndarray:
    """Update every row of ``X`` (shape ``(m, n)``) at once; no assumption checks."""
    X = np.asarray(X, dtype=float)
    return X + params.h * (-params.delta * X + (1.0 - X) * params.infection_many(X))


def _check_state(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"state must have length {n}, got shape {x.shape}")
    return x


def step(params: GeneralParams, x, force: bool = False) -> np.ndarray:
    """One mean-field update of the pairwise + third-order model.

    Without ``force`` the state must lie in the unit box and the weak rate bounds
    must hold (this is what keeps the next state in the box). With ``force`` the
    update is applied as-is; results are never clamped.
    """
    if not isinstance(params, SisParams) and params.max_order > 3:
        raise ValueError("step handles up to third-order tensors; use step_general")
    return step_general(params, x, force=force)


def step_general(params: GeneralParams, x, force: bool = False) -> np.ndarray:
    """One mean-field update with rate tensors of arbitrary order."""
    x = _check_state(x, params.n)
    if not force:
        if x.min() < 0 or x.max() > 1:
            raise AssumptionViolation("state outside [0,1]^n")
        _require_weak_bounds_cached(params)
    return _step_raw(params, x)


_checked: "dict[int, object]" = {}


def _require_weak_bounds_cached(params) -> None:
    # validation is pure in the (immutable) params; remember successes per object
    key = id(params)
    if _checked.get(key) is params:
        return
    _require_weak_bounds(params)
    if len(_checked) > 1024:
        _checked.clear()
    _checked[key] = params


def _step_bivirus_raw(params: BiVirusParams, x1: np.ndarray, x2: np.ndarray):
    p1, p2 = params.virus1, params.virus2
    s = 1.0 - x1 - x2
    y1 = x1 + p1.h * (-p1.delta * x1 + s * p1.infection(x1))
    y2 = x2 + p2.h * (-p2.delta * x2 + s * p2.infection(x2))
    return y1, y2


def step_bivirus(params: BiVirusParams, x1, x2, force: bool = False):
    """One update of the competing two-virus model; returns ``(x1+, x2+)``."""
    x1 = _check_state(x1, params.n)
    x2 = _check_state(x2, params.n)
    if not force:
        if min(x1.min(), x2.min()) < 0 or (x1 + x2).max() > 1:
            raise AssumptionViolation("(x1, x2) outside the simplex set")
        _require_weak_bounds_cached(params)
    return _step_bivirus_raw(params, x1, x2)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``x(0..T)``: shape ``(T+1, n)``, or ``(T+1, 2, n)`` for two viruses."""

    h: float
    states: np.ndarray

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def n(self) -> int:
        return self.states.shape[-1]

    @property
    def is_bivirus(self) -> bool:
        return self.states.ndim == 3

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self) -> int:
        return self.states.shape[0]


def simulate(params, x0, T: int, force: bool = False) -> Trajectory:
    """Iterate the update map ``T`` times from ``x0`` and record every state.

    ``params`` may be :class:`SisParams`, :class:`GeneralParams` or
    :class:`BiVirusParams` (then ``x0`` is the pair ``(x1, x2)``).
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    if isinstance(params, BiVirusParams):
        x1 = _check_state(x0[0], params.n).copy()
        x2 = _check_state(x0[1], params.n).copy()
        if not force:
            report = validate_assumptions(params, "weak", (x1, x2))
            _raise_if_bad(report)
        out = np.empty((T + 1, 2, params.n))
        out[0, 0], out[0, 1] = x1, x2
        for t in range(T):
            x1, x2 = _step_bivirus_raw(params, x1, x2)
            out[t + 1, 0], out[t + 1, 1] = x1, x2
        return Trajectory(params.h, out)
    x = _check_state(x0, params.n).copy()
    if not force:
        _raise_if_bad(validate_assumptions(params, "weak", x))
    out = np.empty((T + 1, params.n))
    out[0] = x
    for t in range(T):
        x = _step_raw(params, x)
        out[t + 1] = x
    return Trajectory(params.h, out)


def _raise_if_bad(report: AssumptionReport) -> None:
    bad = [c for c in report.checks if not c.holds and "irreducible" not in c.name]
    if bad:
        raise AssumptionViolation(
            "assumptions violated: " + ", ".join(c.name for c in bad), report
        )


@dataclass(frozen=True)
class RestResult:
    state: np.ndarray
    steps: int
    residual: float
    converged: bool


def run_to_rest(params, x0, tol: float = 1e-8, max_steps: int = 1_000_000, check_every: int = 1) -> RestResult:
    """Iterate the update map until ``max|x(t+1) - x(t)| < tol``.

    Returns the final state even when ``max_steps`` is exhausted; inspect
    ``converged``. For bi-virus parameters the state is a ``(2, n)`` array.
    """
    if isinstance(params, BiVirusParams):
        x1 = np.array(x0[0], dtype=float)
        x2 = np.array(x0[1], dtype=float)
        res = math.inf
        for t in range(1, max_steps + 1):
            y1, y2 = _step_bivirus_raw(params, x1, x2)
            if t % check_every == 0:
                res = float(max(np.abs(y1 - x1).max(), np.abs(y2 - x2).max()))
                if res < tol:
                    return RestResult(np.stack([y1, y2]), t, res, True)
            x1, x2 = y1, y2
        return RestResult(np.stack([x1, x2]), max_steps, res, False)
    x = np.array(x0, dtype=float)
    res = math.inf
    for t in range(1, max_steps + 1):
        y = _step_raw(params, x)
        if t % check_every == 0:
            res = float(np.abs(y - x).max())
            if res < tol:
                return RestResult(y, t, res, True)
        x = y
    return RestResult(x, max_steps, res, False)


# -- equilibria -------------------------------------------------------------------------


def fixed_point_map(params: GeneralParams, x) -> np.ndarray:
    """``T_i(x) = g_i / (1 + g_i)`` with ``g = D^{-1} (B x + sum_k F_k x^{k-1})``.

    Fixed points of this map are exactly the equilibria of the update map, and the
    map is monotone on the nonnegative orthant.
    """
    x = _check_state(x, params.n)
    g = params.infection(x) / params.delta
    return g / (1.0 + g)


def step_residual(params: GeneralParams, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.abs(_step_raw(params, x) - x).max())


def find_equilibrium(
    params: GeneralParams, init=None, tol: float = 1e-12, max_iters: int = 1_000_000
) -> np.ndarray:
    """Equilibrium reached by iterating the fixed-point map from ``init``.

    ``init`` defaults to the all-ones vector, from which the iteration decreases
    monotonically to the largest equilibrium. If the map stalls before the step
    residual drops to ``10 * tol``, the update map itself is iterated instead.

    Raises
    ------
    NotConverged
        With the best iterate and its residual.
    """
    x = np.ones(params.n) if init is None else _check_state(init, params.n).copy()
    if x.min() < 0:
        raise ValueError("init must be nonnegative")
    target = 10.0 * tol
    for it in range(1, max_iters + 1):
        y = fixed_point_map(params, x)
        change = float(np.abs(y - x).max())
        x = y
        if change < tol:
            if step_residual(params, x) <= target:
                return x
            if change < 1e-15:
                break
    else:
        raise NotConverged("fixed-point iteration did not settle", x, step_residual(params, x), max_iters)
    rest = run_to_rest(params, x, tol=tol * 1e-3, max_steps=max_iters)
    res = step_residual(params, rest.state)
    if res <= target:
        return rest.state
    raise NotConverged("equilibrium search stalled", rest.state, res, max_iters)


def cluster_states(states: Sequence[np.ndarray], tol: float = 1e-6) -> list[np.ndarray]:
    """Group limit states whose max-norm distance is below ``tol``; returns representatives."""
    reps: list[np.ndarray] = []
    for s in states:
        s = np.asarray(s, dtype=float)
        if not any(float(np.abs(s - r).max()) < tol for r in reps):
            reps.append(s)
    return reps


# -- error dynamics ---------------------------------------------------------------------


def _require_equilibrium(params: GeneralParams, xbar: np.ndarray, tol: float) -> None:
    res = step_residual(params, xbar)
    if res > tol:
        raise NotAnEquilibrium(f"xbar is not an equilibrium (step residual {res:.3g} > {tol:.3g})")


def error_dynamics_tensors(params: SisParams, xbar, tol: float = 1e-9):
    """Exact cubic expansion of the update map around an equilibrium.

    With ``y = x - xbar`` the update becomes ``y+ = K1 y + K2 y^2 + K3 y^3`` where

    * ``K1 = I - hD + h(I - diag xbar)(B + 2 H xbar) - h diag(B xbar + H xbar^2)``
    * ``K2 = h (I - diag xbar) H - h (lift(B) + 2 lift(H) xbar)``
    * ``K3 = -h lift(H)``

    and ``lift`` inserts a repeated first index (``lift(B)[i, i, k] = B[i, k]``).
    Returns ``(K1, K2, K3)`` as a dense matrix and two sparse tensors.
    """
    if isinstance(params, GeneralParams) and params.max_order > 3:
        raise ValueError("use error_dynamics_general for tensors of order > 3")
    xbar = _check_state(xbar, params.n)
    _require_equilibrium(params, xbar, tol)
    h, n = params.h, params.n
    H = params.higher(3)
    Bd = params.B_dense
    Hx = tensor_vector_power(H, xbar, 1)
    F = Bd @ xbar + tensor_vector_power(H, xbar, 2)
    K1 = (
        np.eye(n)
        - h * np.diag(params.delta)
        + h * (1.0 - xbar)[:, None] * (Bd + 2.0 * Hx)
        - h * np.diag(F)
    )
    H_lift = H.lift()
    K2 = H.scale_rows(1.0 - xbar) * h - (params.B.lift() + H_lift.contract(xbar, 1) * 2.0) * h
    K3 = H_lift * (-h)
    return K1, K2, K3


def error_dynamics_general(params: GeneralParams, xbar, tol: float = 1e-9) -> list:
    """Polynomial expansion ``y+ = sum_m G_m y^m`` around an equilibrium.

    ``G_1`` is returned as a dense matrix, ``G_m`` (order ``m + 1``) for
    ``m = 2..K`` as sparse tensors, ``K`` being the highest tensor order.
    """
    xbar = _check_state(xbar, params.n)
    _require_equilibrium(params, xbar, tol)
    h, n = params.h, params.n
    K = params.max_order
    one_minus = 1.0 - xbar

    # T[k][i] = C(k-1, i) * F_k contracted with xbar on its last k-1-i modes (order i+1)
    T: dict[int, dict[int, object]] = {}
    for k, Fk in params.F.items():
        T[k] = {}
        for i in range(0, k):
            c = math.comb(k - 1, i)
            if i == 0:
                T[k][0] = c * tensor_vector_power(Fk, xbar, k - 1)
            elif i == k - 1:
                T[k][i] = Fk * c
            else:
                T[k][i] = Fk.contract(xbar, k - 1 - i) * c

    Bd = params.B_dense
    lin = Bd.copy()
    zero = Bd @ xbar
    for k in T:
        lin += T[k][1].to_dense() if k > 2 else 0.0
        zero += T[k][0]
    G1 = np.eye(n) - h * np.diag(params.delta) + h * one_minus[:, None] * lin - h * np.diag(zero)

    G = [G1]
    for m in range(2, K + 1):
        acc = SparseCubicalTensor(m + 1, n)
        for k in T:
            if m <= k - 1:
                acc = acc + T[k][m].scale_rows(one_minus) * h
            if m - 1 <= k - 1 and m - 1 >= 1:
                acc = acc - T[k][m - 1].lift() * h
        if m == 2:
            acc = acc - params.B.lift() * h
        G.append(acc)
    return G


def evaluate_polynomial_map(terms, y) -> np.ndarray:
    """``sum_m terms[m-1] y^m`` for a dense matrix followed by sparse tensors."""
    y = np.asarray(y, dtype=float)
    out = np.asarray(terms[0]) @ y
    for T in terms[1:]:
        out = out + tensor_vector_power(T, y, T.order - 1)
    return out
