"""Threshold conditions, stability certificates and regime classification.

Every checker returns plain numbers next to its verdict so the margin by which a
condition holds (or fails) is always visible. The conditions are sufficient, not
necessary; a failed check says nothing about the opposite regime.

Domains of attraction are max-norm balls. ``alpha1`` and ``p_plus`` for the healthy
state are centred at the origin; ``alpha2`` and ``p_plus`` for an endemic state are
balls around that state (error coordinates ``y = x - xbar``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from .dynamics import (
    BiVirusParams,
    Check,
    GeneralParams,
    NotConverged,
    SisParams,
    error_dynamics_general,
    error_dynamics_tensors,
    find_equilibrium,
    step_residual,
)
from .tensor import SparseCubicalTensor, is_irreducible, perron, tensor_vector_power

__all__ = [
    "Classification",
    "DomainOfAttraction",
    "RegimeReport",
    "BiVirusReport",
    "PreconditionFailed",
    "spectral_radius",
    "reproduction_number",
    "next_generation_radius",
    "higher_order_support",
    "prop1_healthy_global",
    "prop2_bistability",
    "prop9_bistability",
    "prop3_endemic",
    "thm1_alpha1",
    "thm2_local_endemic",
    "thm3_alpha2",
    "thm5_healthy_p_plus",
    "thm6_endemic_p_plus",
    "jacobian",
    "bivirus_jacobian",
    "p_plus_roots",
    "bivirus_conditions",
    "classify",
]


class PreconditionFailed(ValueError):
    """A theorem's hypothesis fails; ``margins`` holds the per-node slack (negative = violated)."""

    def __init__(self, message: str, margins=None):
        super().__init__(message)
        self.margins = None if margins is None else np.asarray(margins, dtype=float)


class Classification(str, Enum):
    HEALTHY_GLOBAL = "HealthyGlobal"
    BISTABLE_CANDIDATE = "BistableCandidate"
    ENDEMIC_CANDIDATE = "EndemicCandidate"
    INDETERMINATE = "Indeterminate"


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isfinite(v):
            return v
        return "inf" if v > 0 else ("-inf" if v < 0 else None)
    if isinstance(v, Enum):
        return v.value
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if hasattr(v, "to_dict"):
        return v.to_dict()
    return v


# -- spectral helpers -------------------------------------------------------------------


def spectral_radius(M) -> float:
    """Spectral radius; Perron iteration for nonnegative input, eigenvalues otherwise."""
    M = np.asarray(M, dtype=float)
    if np.all(M >= 0):
        return perron(M).radius
    return float(np.abs(np.linalg.eigvals(M)).max())


def _identity_plus_metzler_radius(M: np.ndarray, h: float) -> float:
    # rho(I + h M) for Metzler M with I + h M >= 0 equals 1 + h * s(M); iterating on the
    # shifted Metzler part has a far better spectral gap than iterating on I + h M
    c = max(0.0, float(-np.diag(M).min()))
    s = perron(M + c * np.eye(M.shape[0])).radius - c
    return 1.0 + h * s


def reproduction_number(params: GeneralParams) -> float:
    """``rho(I - hD + hB)``; above 1 the healthy state is unstable."""
    M = params.B_dense - np.diag(params.delta)
    if np.any(np.diag(np.eye(params.n) + params.h * M) < 0):
        return spectral_radius(np.eye(params.n) + params.h * M)
    return _identity_plus_metzler_radius(M, params.h)


def next_generation_radius(params: GeneralParams) -> float:
    """``rho(D^{-1} B)``; its position relative to 1 matches that of the reproduction number."""
    return perron(params.B_dense / params.delta[:, None]).radius


def higher_order_support(params: GeneralParams) -> np.ndarray:
    """Binary vector ``z``: 1 where some higher-order tensor has an entry with that first index."""
    z = np.zeros(params.n)
    for T in params.F.values():
        z[T.row_support()] = 1.0
    return z


# -- single virus propositions ----------------------------------------------------------


class Prop1Result(NamedTuple):
    holds: bool
    rho: float
    z: np.ndarray


class Prop2Result(NamedTuple):
    holds: bool
    rho: float
    theta: float | None


class Prop3Result(NamedTuple):
    holds: bool
    rho: float
    h_max_entry: float
    heuristic: bool = True


def prop1_healthy_global(params: GeneralParams) -> Prop1Result:
    """Global exponential stability of the healthy state.

    Holds when ``rho(D^{-1} B + D^{-1} sum_k F_k z^{k-2}) < 1`` where ``z`` marks the
    agents that are tails of some higher-order edge. With third-order edges only the
    sum is ``H z``.
    """
    z = higher_order_support(params)
    M = params.B_dense.copy()
    for k, T in params.F.items():
        M += tensor_vector_power(T, z, k - 2)
    rho = perron(M / params.delta[:, None]).radius
    return Prop1Result(bool(rho < 1.0), rho, z)


def prop2_bistability(params: GeneralParams) -> Prop2Result:
    """Coexisting stable healthy and endemic states (third-order edges).

    ``theta = min over tails i of (2 D^{-1} B z + D^{-1} H z^2)_i``; holds when
    ``rho(I - hD + hB) < 1`` and ``theta >= 4``. Without third-order edges ``theta``
    is absent and the check fails.
    """
    if params.max_order > 3:
        raise ValueError("use prop9_bistability for tensors of order > 3")
    rho = reproduction_number(params)
    H = params.higher(3)
    z = H.row_support().astype(float)
    if not z.any():
        return Prop2Result(False, rho, None)
    vals = (2.0 * (params.B_dense @ z) + tensor_vector_power(H, z, 2)) / params.delta
    theta = float(vals[z > 0].min())
    return Prop2Result(bool(rho < 1.0 and theta >= 4.0), rho, theta)


def prop9_bistability(params: GeneralParams) -> Prop2Result:
    """General-order bistability check with threshold ``n - 1``.

    ``theta = min_i (D^{-1} (B z + sum_k ((n-2)/(n-1))^{k-2} F_k z^{k-1}))_i`` over all
    agents, with ``z`` from :func:`higher_order_support`.
    """
    n = params.n
    rho = reproduction_number(params)
    if not params.F or n < 3:
        return Prop2Result(False, rho, None)
    z = higher_order_support(params)
    if not z.any():
        return Prop2Result(False, rho, None)
    r = (n - 2) / (n - 1)
    acc = params.B_dense @ z
    for k, T in params.F.items():
        acc = acc + r ** (k - 2) * tensor_vector_power(T, z, k - 1)
    theta = float((acc / params.delta).min())
    return Prop2Result(bool(rho < 1.0 and theta >= n - 1), rho, theta)


def prop3_endemic(params: GeneralParams, smallness_tol: float | None = None) -> Prop3Result:
    """Unique endemic equilibrium when ``rho(I - hD + hB) > 1`` and higher-order rates are small.

    "Small" has no quantitative form, so it is a user threshold on the largest
    higher-order entry (default ``0.01 * min(delta)``). The verdict is heuristic.
    """
    if smallness_tol is None:
        smallness_tol = 0.01 * float(params.delta.min())
    rho = reproduction_number(params)
    hmax = max((T.max_abs() for T in params.F.values()), default=0.0)
    return Prop3Result(bool(rho > 1.0 and hmax <= smallness_tol), rho, hmax)


# -- domains of attraction --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DomainOfAttraction:
    """Certified max-norm ball of initial states converging to ``target``.

    ``centre`` is ``"origin"`` for balls ``max|x_i(0)| < radius`` and ``"target"`` for
    balls ``max|x_i(0) - target_i| < radius``. ``is_global`` means every initial
    state in the unit box is covered.
    """

    kind: str
    radius: float
    target: np.ndarray
    per_node: np.ndarray | None = None
    centre: str = "origin"
    is_global: bool = False
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.kind not in ("alpha1", "alpha2", "p_plus"):
            raise ValueError(f"unknown domain kind {self.kind!r}")

    def contains(self, x, strict: bool = True) -> bool:
        x = np.asarray(x, dtype=float)
        ref = np.zeros_like(x) if self.centre == "origin" else self.target
        d = float(np.abs(x - ref).max())
        return d < self.radius if strict else d <= self.radius

    def to_dict(self) -> dict:
        return _jsonable(
            {
                "kind": self.kind,
                "radius": self.radius,
                "per_node": self.per_node,
                "target": self.target,
                "centre": self.centre,
                "is_global": self.is_global,
                "notes": list(self.notes),
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def p_plus_roots(coeffs, max_iters: int = 200) -> np.ndarray:
    """Positive root ``p_i`` of ``sum_k c[k, i] * y^(k-1) = 1`` for every node.

    ``coeffs`` has shape ``(K, n)``: row ``k`` holds the coefficients of ``y^k``.
    The polynomial is increasing on ``y > 0`` and below 1 at zero, so the root is
    unique; it is found by bisection after doubling the bracket from ``[0, 1]``.
    Nodes whose higher coefficients are all zero get ``inf``.
    """
    c = np.atleast_2d(np.asarray(coeffs, dtype=float))
    if c.ndim != 2 or c.shape[0] < 1:
        raise ValueError("coeffs must have shape (K, n)")
    if np.any(c < 0):
        raise ValueError("coefficients are absolute row sums and must be nonnegative")
    if np.any(c[0] >= 1):
        raise PreconditionFailed("linear coefficient must be < 1 on every node", 1.0 - c[0])
    out = np.full(c.shape[1], np.inf)

    def f(y, col):
        return float(np.polynomial.polynomial.polyval(y, col))

    for i in range(c.shape[1]):
        col = c[:, i]
        if not np.any(col[1:] > 0):
            continue
        hi = 1.0
        while f(hi, col) <= 1.0:
            hi *= 2.0
        lo = 0.0
        for _ in range(max_iters):
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            if f(mid, col) < 1.0:
                lo = mid
            else:
                hi = mid
        out[i] = lo
    return out


def _no_oscillation(params: GeneralParams) -> None:
    if np.any(params.h * params.delta > 1):
        raise PreconditionFailed("h * delta_i <= 1 is required", 1.0 - params.h * params.delta)


def thm1_alpha1(params: GeneralParams) -> DomainOfAttraction:
    """Healthy-state domain ``max x_i(0) < alpha1`` with pairwise and third-order edges.

    ``alpha1 = min_i (delta_i - sum_j beta_ij) / sum_jk beta_ijk``. The domain is
    global when ``delta_i > sum_j beta_ij + sum_jk beta_ijk`` on every node (then
    ``alpha1 > 1``). Irreducibility of ``H`` is recorded but not needed: the bound
    ``x_i+ <= (1 - h delta_i + h sum_j beta_ij) |x| + h sum_jk beta_ijk |x|^2`` in the
    max norm already forces decay inside the ball.
    """
    if params.max_order > 3:
        raise ValueError("use thm5_healthy_p_plus for tensors of order > 3")
    _no_oscillation(params)
    pair = params.B.row_sums()
    tri = params.higher(3).row_sums()
    slack = params.delta - pair
    if np.any(slack <= 0):
        raise PreconditionFailed("delta_i > sum_j beta_ij fails on some node", slack)
    with np.errstate(divide="ignore"):
        per_node = np.where(tri > 0, slack / np.where(tri > 0, tri, 1.0), np.inf)
    radius = float(per_node.min())
    notes = []
    if not is_irreducible(params.higher(3)):
        notes.append("H is reducible; the max-norm comparison bound does not use irreducibility")
    return DomainOfAttraction(
        "alpha1", radius, np.zeros(params.n), per_node, "origin", bool(radius > 1.0), tuple(notes)
    )


class Thm2Result(NamedTuple):
    case_i: bool
    case_ii: bool
    margins: dict


def thm2_local_endemic(params: GeneralParams, xbar, tol: float = 1e-9) -> Thm2Result:
    """Local stability checks at an endemic equilibrium ``xbar``.

    Both cases need ``xbar >= 2/3`` and
    ``delta_i > (1 - xbar_i)(sum_j beta_ij + 2 sum_jk beta_ijk xbar_k)``. Case i adds
    ``xbar_i < tau_i`` (healthy state also stable), case ii adds ``tau_i < xbar_i < 1``,
    with ``tau_i = 2 s_i / (2 s_i + sum_j beta_ij)`` and ``s_i = sum_jk beta_ijk xbar_k``.
    ``margins`` holds per-node slacks (positive = satisfied).
    """
    if params.max_order > 3:
        raise ValueError("third-order edges only")
    xbar = np.asarray(xbar, dtype=float)
    res = step_residual(params, xbar)
    if res > tol:
        raise ValueError(f"xbar is not an equilibrium (step residual {res:.3g})")
    pair = params.B.row_sums()
    s = tensor_vector_power(params.higher(3), xbar, 1).sum(axis=1) if params.higher(3).nnz else np.zeros(params.n)
    denom = 2.0 * s + pair
    tau = np.divide(2.0 * s, denom, out=np.zeros(params.n), where=denom > 0)
    m_two_thirds = xbar - 2.0 / 3.0
    m_delta = params.delta - (1.0 - xbar) * (pair + 2.0 * s)
    m_below = tau - xbar
    m_above = np.minimum(xbar - tau, 1.0 - xbar)
    base = bool(np.all(m_two_thirds >= 0) and np.all(m_delta > 0))
    margins = {
        "xbar_minus_two_thirds": m_two_thirds,
        "delta_inequality": m_delta,
        "threshold": tau,
        "below_threshold": m_below,
        "above_threshold": m_above,
    }
    return Thm2Result(base and bool(np.all(m_below > 0)), base and bool(np.all(m_above > 0)), margins)


def _alpha2_roots(k1: np.ndarray, k2: np.ndarray, k3: np.ndarray) -> np.ndarray:
    out = np.full(k1.shape, np.inf)
    for i in range(k1.size):
        a, b, c = k3[i], k2[i], k1[i] - 1.0
        if a > 0:
            # stable form of (-b + sqrt(b^2 - 4ac)) / 2a for c < 0
            out[i] = (-2.0 * c) / (b + math.sqrt(b * b - 4.0 * a * c))
        elif b > 0:
            out[i] = -c / b
    return out


def thm3_alpha2(params: GeneralParams, xbar, tol: float = 1e-9) -> DomainOfAttraction:
    """Endemic domain ``max |x_i(0) - xbar_i| < alpha2`` from the cubic error dynamics.

    With absolute row sums ``k1, k2, k3`` of the error tensors, ``alpha2`` is the
    minimum over nodes of the positive root of ``k3 y^2 + k2 y + k1 = 1``. The ball is
    taken around ``xbar``: the certificate comes from the origin of the error system.
    Global when ``k1 + k2 + k3 < 1`` on every node (every error is at most 1).

    Raises
    ------
    PreconditionFailed
        When some ``k1_i >= 1``.
    """
    xbar = np.asarray(xbar, dtype=float)
    K1, K2, K3 = error_dynamics_tensors(params, xbar, tol=tol)
    k1 = np.abs(K1).sum(axis=1)
    k2 = K2.abs_row_sums()
    k3 = K3.abs_row_sums()
    if np.any(k1 >= 1):
        raise PreconditionFailed("absolute row sums of K1 must be < 1", 1.0 - k1)
    per_node = _alpha2_roots(k1, k2, k3)
    radius = float(per_node.min())
    pair = params.B.row_sums()
    H = params.higher(3)
    s = tensor_vector_power(H, xbar, 1).sum(axis=1) if H.nnz else np.zeros(params.n)
    F = params.B_dense @ xbar + tensor_vector_power(H, xbar, 2)
    ineq = params.delta - ((1.0 - xbar) * (pair + 2.0 * s) - F)
    notes = ["ball centred at the endemic target (error coordinates)"]
    if np.any(ineq <= 0):
        notes.append("per-node delta inequality fails; certificate rests on the row sums alone")
    is_global = bool(np.all(k1 + k2 + k3 < 1.0))
    return DomainOfAttraction("alpha2", radius, xbar.copy(), per_node, "target", is_global, tuple(notes))


def _healthy_C(params: GeneralParams):
    C1 = np.eye(params.n) - params.h * np.diag(params.delta) + params.h * params.B_dense
    rows = [np.abs(C1).sum(axis=1)]
    for k in range(3, params.max_order + 1):
        rows.append(params.h * params.higher(k).abs_row_sums())
    return np.array(rows)


def thm5_healthy_p_plus(params: GeneralParams) -> DomainOfAttraction:
    """Healthy-state domain ``max x_i(0) < min_i p_i`` for arbitrary orders.

    ``p_i`` solves ``sum_k c_k,i y^(k-1) = 1`` with ``c`` the absolute row sums of
    ``C1 = I - hD + hB`` and ``C_k = h F_{k+1}``.
    """
    _no_oscillation(params)
    coeffs = _healthy_C(params)
    per_node = p_plus_roots(coeffs)
    radius = float(per_node.min())
    return DomainOfAttraction(
        "p_plus", radius, np.zeros(params.n), per_node, "origin", bool(radius > 1.0)
    )


def _alpha3(params: GeneralParams, xbar: np.ndarray) -> np.ndarray:
    lin = params.B.row_sums()
    zero = params.B_dense @ xbar
    for k, T in params.F.items():
        lin = lin + (k - 1) * tensor_vector_power(T, xbar, k - 2).reshape(params.n, -1).sum(axis=1)
        zero = zero + tensor_vector_power(T, xbar, k - 1)
    return (1.0 - xbar) * lin - zero


def thm6_endemic_p_plus(params: GeneralParams, xbar, tol: float = 1e-9) -> DomainOfAttraction:
    """Endemic domain ``max |x_i(0) - xbar_i| < min_i p_i`` from the general error tensors."""
    xbar = np.asarray(xbar, dtype=float)
    G = error_dynamics_general(params, xbar, tol=tol)
    coeffs = [np.abs(G[0]).sum(axis=1)] + [T.abs_row_sums() for T in G[1:]]
    per_node = p_plus_roots(np.array(coeffs))
    radius = float(per_node.min())
    notes = ["ball centred at the endemic target (error coordinates)"]
    if np.any(params.delta <= _alpha3(params, xbar)):
        notes.append("delta_i > alpha3_i fails on some node; certificate rests on the row sums alone")
    is_global = bool(np.all(np.sum(coeffs, axis=0) < 1.0))
    return DomainOfAttraction("p_plus", radius, xbar.copy(), per_node, "target", is_global, tuple(notes))


# -- Jacobians --------------------------------------------------------------------------


class JacobianResult(NamedTuple):
    matrix: np.ndarray
    radius: float
    stable: bool


def jacobian(params: GeneralParams, xbar) -> JacobianResult:
    """Jacobian of the update map at ``xbar`` with its spectral radius.

    ``J = I + h(-D + (I - diag xbar)(B + sum_k (k-1) F_k xbar^{k-2}) - diag(B xbar + sum_k F_k xbar^{k-1}))``,
    which is ``I - hD + hB`` at the origin. ``stable`` means radius < 1.
    """
    xbar = np.asarray(xbar, dtype=float)
    n = params.n
    lin = params.B_dense.copy()
    zero = params.B_dense @ xbar
    for k, T in params.F.items():
        lin += (k - 1) * tensor_vector_power(T, xbar, k - 2)
        zero = zero + tensor_vector_power(T, xbar, k - 1)
    J = np.eye(n) + params.h * (-np.diag(params.delta) + (1.0 - xbar)[:, None] * lin - np.diag(zero))
    r = spectral_radius(J)
    return JacobianResult(J, r, bool(r < 1.0))


def bivirus_jacobian(params: BiVirusParams, x1, x2) -> JacobianResult:
    """Jacobian of the two-virus map at ``(x1, x2)`` as a ``2n x 2n`` block matrix."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    n, h = params.n, params.h
    s = 1.0 - x1 - x2
    blocks = []
    for p, x in ((params.virus1, x1), (params.virus2, x2)):
        H = p.higher(3)
        lin = p.B_dense + 2.0 * tensor_vector_power(H, x, 1)
        F = p.infection(x)
        own = np.eye(n) + h * (-np.diag(p.delta) + s[:, None] * lin - np.diag(F))
        cross = -h * np.diag(F)
        blocks.append((own, cross))
    (a, b), (d, c) = blocks
    J = np.block([[a, b], [c, d]])
    r = spectral_radius(J)
    return JacobianResult(J, r, bool(r < 1.0))


# -- regime report ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RegimeReport:
    rho_reproduction: float
    rho_prop1: float
    z: np.ndarray
    theta: float | None
    conditions: tuple[Check, ...]
    classification: Classification
    notes: tuple[str, ...] = ()

    def condition(self, name: str) -> Check:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return _jsonable(
            {
                "rho_reproduction": self.rho_reproduction,
                "rho_prop1": self.rho_prop1,
                "z": self.z.astype(int),
                "theta": self.theta,
                "conditions": [c.to_dict() for c in self.conditions],
                "classification": self.classification,
                "notes": list(self.notes),
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def classify(params: GeneralParams, smallness_tol: float | None = None) -> RegimeReport:
    """Run the threshold checks and place ``params`` in a regime.

    Decision order: prop1 gives HealthyGlobal; otherwise prop2 (prop9 beyond third
    order) gives BistableCandidate; otherwise the heuristic prop3 gives
    EndemicCandidate; otherwise Indeterminate.
    """
    p1 = prop1_healthy_global(params)
    general = params.max_order > 3
    p2 = prop9_bistability(params) if general else prop2_bistability(params)
    p3 = prop3_endemic(params, smallness_tol)
    rho = p2.rho
    theta_req = (params.n - 1) if general else 4.0
    bist = "prop9" if general else "prop2"
    endem = "prop10" if general else "prop3"
    tol = 0.01 * float(params.delta.min()) if smallness_tol is None else smallness_tol
    conds = [
        Check("prop1: rho(D^-1 B + D^-1 H z) < 1", p1.holds, 1.0 - p1.rho),
        Check(f"{bist}: rho(I - hD + hB) < 1", rho < 1.0, 1.0 - rho),
        Check(
            f"{bist}: theta >= {theta_req:g}",
            p2.theta is not None and p2.theta >= theta_req,
            math.nan if p2.theta is None else p2.theta - theta_req,
        ),
        Check(f"{endem}: rho(I - hD + hB) > 1", rho > 1.0, rho - 1.0),
        Check(f"{endem}: max higher-order rate <= {tol:g} (heuristic)", p3.h_max_entry <= tol, tol - p3.h_max_entry),
    ]
    if p1.holds:
        cls = Classification.HEALTHY_GLOBAL
    elif p2.holds:
        cls = Classification.BISTABLE_CANDIDATE
    elif p3.holds:
        cls = Classification.ENDEMIC_CANDIDATE
    else:
        cls = Classification.INDETERMINATE
    notes = ("the smallness threshold is a user choice; the endemic verdict is heuristic",) if p3.holds else ()
    return RegimeReport(rho, p1.rho, p1.z, p2.theta, tuple(conds), cls, notes)


# -- two viruses ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BiVirusReport:
    rho: tuple[float, float]
    theta: tuple[float | None, float | None]
    equilibria: tuple[np.ndarray, np.ndarray]
    cross_rho: tuple[float, float]
    dominant_jacobian_rho: tuple[float, float]
    domains: tuple[DomainOfAttraction | None, DomainOfAttraction | None]
    conditions: tuple[Check, ...]
    notes: tuple[str, ...] = ()

    def condition(self, name: str) -> Check:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return _jsonable(
            {
                "rho": self.rho,
                "theta": self.theta,
                "equilibria": self.equilibria,
                "cross_rho": self.cross_rho,
                "dominant_jacobian_rho": self.dominant_jacobian_rho,
                "domains": [None if d is None else d.to_dict() for d in self.domains],
                "conditions": [c.to_dict() for c in self.conditions],
                "notes": list(self.notes),
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def _cross_radius(p: GeneralParams, other_eq: np.ndarray) -> float:
    M = -np.diag(p.delta) + (1.0 - other_eq)[:, None] * p.B_dense
    return _identity_plus_metzler_radius(M, p.h)


def bivirus_conditions(params: BiVirusParams, equilibria: Sequence | None = None) -> BiVirusReport:
    """Evaluate the two-virus threshold conditions.

    ``equilibria`` are the single-virus endemic states ``(xbar1, xbar2)`` behind the
    dominant equilibria ``(xbar1, 0)`` and ``(0, xbar2)``. When omitted they are
    computed from the all-ones start. The coexistence theorem asks for locally stable
    dominant equilibria together with the cross radii above 1; the lower-right block
    of the Jacobian at ``(xbar1, 0)`` is exactly the cross matrix of virus 2, so both
    cannot hold at once. The check is still reported as stated.
    """
    viruses = params.viruses
    if equilibria is None:
        eqs = []
        for p in viruses:
            try:
                eqs.append(find_equilibrium(p))
            except NotConverged as exc:
                raise ValueError(f"could not compute a dominant equilibrium: {exc}") from exc
        equilibria = eqs
    x1, x2 = (np.asarray(e, dtype=float) for e in equilibria)
    if x1.shape != (params.n,) or x2.shape != (params.n,):
        raise ValueError("need one equilibrium per virus")

    conds: list[Check] = []
    p1s = [prop1_healthy_global(p) for p in viruses]
    p2s = [prop2_bistability(p) for p in viruses]
    rho = tuple(r.rho for r in p2s)
    for ell, r in enumerate(p1s, start=1):
        conds.append(Check(f"prop4: virus {ell} rho(D^-1 B + D^-1 H z) < 1", r.holds, 1.0 - r.rho))
    conds.append(Check("prop4: healthy state globally stable", all(r.holds for r in p1s), math.nan))

    domains = []
    for ell, p in enumerate(viruses, start=1):
        slack = p.delta - p.B.row_sums()
        upper = p.delta - p.B.row_sums() - p.higher(3).row_sums()
        try:
            d = thm1_alpha1(p)
        except PreconditionFailed:
            d = None
        domains.append(d)
        conds.append(Check(f"prop5: virus {ell} delta_i > sum_j beta_ij", bool(np.all(slack > 0)), float(slack.min())))
        conds.append(Check(f"prop5: virus {ell} global (delta_i > all row sums)", bool(np.all(upper > 0)), float(upper.min())))

    for ell, r in enumerate(p2s, start=1):
        conds.append(Check(f"prop6: virus {ell} rho(I - hD + hB) < 1", r.rho < 1.0, 1.0 - r.rho))
        th = r.theta
        conds.append(
            Check(f"prop6: virus {ell} theta >= 4", th is not None and th >= 4.0, math.nan if th is None else th - 4.0)
        )
    conds.append(Check("prop6: multistability", all(r.holds for r in p2s), math.nan))

    cross = (_cross_radius(viruses[0], x2), _cross_radius(viruses[1], x1))
    above = all(r > 1.0 for r in rho)
    for ell, cr in enumerate(cross, start=1):
        conds.append(Check(f"prop7i: virus {ell} cross radius > 1", cr > 1.0, cr - 1.0))
    conds.append(Check("prop7: rho(I - hD + hB) > 1 for both viruses", above, min(rho) - 1.0))
    conds.append(Check("prop7i: coexisting equilibrium exists", above and all(c > 1.0 for c in cross), math.nan))
    tol = [0.01 * float(p.delta.min()) for p in viruses]
    small = all(p.higher(3).max_abs() <= t for p, t in zip(viruses, tol))
    p7ii = above and all(r.holds for r in p1s) and small
    conds.append(Check("prop7ii: dominant equilibria globally stable (heuristic smallness)", p7ii, math.nan))

    zero = np.zeros(params.n)
    jr = (bivirus_jacobian(params, x1, zero).radius, bivirus_jacobian(params, zero, x2).radius)
    dominant_stable = all(r < 1.0 for r in jr)
    conds.append(Check("thm4: dominant equilibria locally stable", dominant_stable, 1.0 - max(jr)))
    conds.append(
        Check("thm4: coexisting equilibrium exists", dominant_stable and all(c > 1.0 for c in cross), math.nan)
    )
    notes = (
        "thm4 hypotheses are mutually exclusive: the Jacobian block at a dominant equilibrium equals the cross matrix",
        "prop7ii asks for rho > 1 and rho(D^-1 B + D^-1 H z) < 1 together, which the radius ordering rules out",
    )
    return BiVirusReport(
        rho,
        tuple(r.theta for r in p2s),
        (x1, x2),
        cross,
        jr,
        tuple(domains),
        tuple(conds),
        notes,
    )
