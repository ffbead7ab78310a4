"""Agent-level stochastic counterparts of the mean-field map.

Per step of length ``h`` every agent updates synchronously from the step-start state:
an infected agent ``i`` recovers with probability ``h * delta_i``; a susceptible agent
becomes infected with probability ``h * (sum_j beta_ij s_j + sum_jk beta_ijk s_j s_k + ...)``
where ``s`` is the current 0/1 state. Agent ``i`` is bit ``i`` of a state bitmask.

Monte Carlo replicas run in fixed-size blocks. Block ``b`` draws from
``np.random.default_rng(np.random.SeedSequence(seed).spawn(n_blocks)[b])`` so a block's
numbers never depend on how blocks are scheduled.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numba
import numpy as np

from .dynamics import (
    AssumptionViolation,
    GeneralParams,
    simulate,
    validate_assumptions,
)

__all__ = [
    "ExactChain",
    "EnsembleResult",
    "build_exact_chain",
    "exact_marginals",
    "monte_carlo",
    "compare_meanfield",
    "infection_structure",
    "BLOCK_SIZE",
]

DEFAULT_CAP = 14
DENSE_LIMIT = 12
BLOCK_SIZE = 250


def _check_rates(params: GeneralParams) -> None:
    report = validate_assumptions(params, "weak")
    # only the probability bounds matter here; delta = 0 just freezes infected agents
    bad = [
        c
        for c in report.checks
        if not c.holds and "irreducible" not in c.name and not (c.name.endswith("curing rates positive") and c.margin == 0)
    ]
    if bad:
        raise AssumptionViolation(
            "transition probabilities may leave [0, 1]: " + ", ".join(c.name for c in bad), report
        )


def _bit_matrix(n: int) -> np.ndarray:
    states = np.arange(1 << n, dtype=np.int64)
    return ((states[:, None] >> np.arange(n)) & 1).astype(float)


@dataclass(frozen=True, eq=False)
class ExactChain:
    """The ``2^n``-state chain, stored through its per-agent infection probabilities.

    ``infect_prob[s, i]`` is the probability that agent ``i`` is infected after one step
    from bitmask ``s``. The transition row of ``s`` is the product of these Bernoulli
    laws; the dense matrix is built on first access of :attr:`transition`.
    """

    n: int
    h: float
    infect_prob: np.ndarray

    @property
    def n_states(self) -> int:
        return 1 << self.n

    @functools.cached_property
    def transition(self) -> np.ndarray:
        if self.n > DENSE_LIMIT:
            raise MemoryError(f"dense transition for n={self.n} is too large; use propagate()")
        return self._rows(0, self.n_states)

    def _rows(self, start: int, stop: int) -> np.ndarray:
        p = self.infect_prob[start:stop]
        T = np.ones((stop - start, self.n_states))
        bits = _bit_matrix(self.n).astype(bool)
        for i in range(self.n):
            T *= np.where(bits[None, :, i], p[:, i : i + 1], 1.0 - p[:, i : i + 1])
        return T

    def propagate(self, dist: np.ndarray) -> np.ndarray:
        """Distribution after one step (row vector times the transition matrix)."""
        dist = np.asarray(dist, dtype=float)
        if dist.shape != (self.n_states,):
            raise ValueError(f"distribution must have length {self.n_states}")
        if self.n <= DENSE_LIMIT:
            return dist @ self.transition
        out = np.zeros(self.n_states)
        block = 1 << 8
        for start in range(0, self.n_states, block):
            stop = min(start + block, self.n_states)
            w = dist[start:stop]
            if w.any():
                out += w @ self._rows(start, stop)
        return out

    def marginals(self, dist: np.ndarray) -> np.ndarray:
        return np.asarray(dist) @ _bit_matrix(self.n)


def build_exact_chain(params: GeneralParams, cap: int = DEFAULT_CAP) -> ExactChain:
    """Exact chain for ``n <= cap`` agents.

    Raises
    ------
    ValueError
        When ``n`` exceeds ``cap``.
    AssumptionViolation
        When some per-step probability could leave ``[0, 1]``.
    """
    n = params.n
    if n > cap:
        raise ValueError(f"exact chain limited to n <= {cap}, got n={n}")
    _check_rates(params)
    S = _bit_matrix(n)
    pressure = np.stack([params.infection(s) for s in S]) if n else np.zeros((1, 0))
    p = S * (1.0 - params.h * params.delta) + (1.0 - S) * params.h * pressure
    if p.min() < -1e-15 or p.max() > 1 + 1e-15:
        raise AssumptionViolation("per-step probability outside [0, 1]")
    p = np.clip(p, 0.0, 1.0)
    p.setflags(write=False)
    return ExactChain(n, params.h, p)


def exact_marginals(chain: ExactChain, init, T: int) -> np.ndarray:
    """``P(X_i(t) = 1)`` for ``t = 0..T``; shape ``(T+1, n)``.

    ``init`` is either per-node infection probabilities (a product distribution, length
    ``n``) or a full distribution over the ``2^n`` bitmasks.
    """
    init = np.asarray(init, dtype=float)
    if init.shape == (chain.n_states,) and chain.n_states != chain.n:
        dist = init
    elif init.shape == (chain.n,):
        if init.min() < 0 or init.max() > 1:
            raise ValueError("init probabilities must lie in [0, 1]")
        S = _bit_matrix(chain.n)
        dist = np.prod(np.where(S > 0, init, 1.0 - init), axis=1)
    else:
        raise ValueError(f"init must have length {chain.n} or {chain.n_states}")
    if dist.min() < 0 or abs(dist.sum() - 1.0) > 1e-9:
        raise ValueError("init is not a probability distribution")
    out = np.empty((T + 1, chain.n))
    out[0] = chain.marginals(dist)
    for t in range(T):
        dist = chain.propagate(dist)
        out[t + 1] = chain.marginals(dist)
    return out


# -- Monte Carlo ------------------------------------------------------------------------


@dataclass(frozen=True)
class InfectionStructure:
    """Hyperedges flattened to (tail, heads, weight) with permutations merged."""

    tail: np.ndarray
    head_ptr: np.ndarray
    heads: np.ndarray
    weight: np.ndarray
    entry_ptr: np.ndarray  # entries grouped by tail: entry_ptr[i]..entry_ptr[i+1]


def infection_structure(params: GeneralParams) -> InfectionStructure:
    """Group tensor entries by tail and unordered head set, summing their weights.

    For binary states ``F x^{k-1}`` only depends on the head set, so the permuted
    copies left by almost-symmetrization collapse into one entry.
    """
    acc: dict[tuple[int, tuple[int, ...]], float] = {}
    tensors = [params.B, *params.F.values()]
    for T in tensors:
        for idx, v in zip(T.indices.tolist(), T.values.tolist()):
            key = (idx[0], tuple(sorted(idx[1:])))
            acc[key] = acc.get(key, 0.0) + v
    keys = sorted(acc)
    tail = np.array([k[0] for k in keys], dtype=np.int64)
    lens = np.array([len(k[1]) for k in keys], dtype=np.int64)
    head_ptr = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
    heads = np.array([h for k in keys for h in k[1]], dtype=np.int64)
    weight = np.array([acc[k] for k in keys], dtype=float)
    entry_ptr = np.searchsorted(tail, np.arange(params.n + 1)).astype(np.int64)
    return InfectionStructure(tail, head_ptr, heads, weight, entry_ptr)


@numba.njit(cache=True)
def _mc_step(X, U, recover, h, entry_ptr, head_ptr, heads, weight):
    R, n = X.shape
    Y = np.empty_like(X)
    for r in range(R):
        for i in range(n):
            if X[r, i]:
                Y[r, i] = 1 if U[r, i] < 1.0 - recover[i] else 0
                continue
            pressure = 0.0
            for e in range(entry_ptr[i], entry_ptr[i + 1]):
                on = True
                for q in range(head_ptr[e], head_ptr[e + 1]):
                    if not X[r, heads[q]]:
                        on = False
                        break
                if on:
                    pressure += weight[e]
            Y[r, i] = 1 if U[r, i] < h * pressure else 0
    return Y


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    runs: int
    seed: int
    avg_infection: np.ndarray
    per_node_marginals: np.ndarray | None = None

    @property
    def steps(self) -> int:
        return self.avg_infection.shape[0] - 1


def monte_carlo(
    params: GeneralParams,
    init_probs,
    T: int,
    runs: int,
    seed: int,
    marginals: bool = True,
    block_size: int = BLOCK_SIZE,
) -> EnsembleResult:
    """Average infection over ``runs`` independent replicas of the agent-level chain.

    Initial states are independent per node with ``P(infected) = init_probs[i]``. Each
    agent uses one uniform draw per step: it ends the step infected if the draw is
    below its infection probability. Results depend only on ``(params, init_probs, T,
    runs, seed, block_size)``.
    """
    if runs < 1:
        raise ValueError("runs must be positive")
    if T < 0:
        raise ValueError("T must be nonnegative")
    _check_rates(params)
    n = params.n
    p0 = np.asarray(init_probs, dtype=float)
    if p0.shape != (n,) or p0.min() < 0 or p0.max() > 1:
        raise ValueError(f"init_probs must be {n} probabilities")
    st = infection_structure(params)
    recover = params.h * params.delta
    n_blocks = math.ceil(runs / block_size)
    streams = np.random.SeedSequence(seed).spawn(n_blocks)
    counts = np.zeros((T + 1, n), dtype=np.int64)
    for b in range(n_blocks):
        size = min(block_size, runs - b * block_size)
        rng = np.random.default_rng(streams[b])
        X = (rng.random((size, n)) < p0).astype(np.uint8)
        counts[0] += X.sum(axis=0, dtype=np.int64)
        for t in range(T):
            U = rng.random((size, n))
            X = _mc_step(X, U, recover, params.h, st.entry_ptr, st.head_ptr, st.heads, st.weight)
            counts[t + 1] += X.sum(axis=0, dtype=np.int64)
    node_freq = counts / runs
    avg = counts.sum(axis=1) / (runs * n)
    return EnsembleResult(runs, seed, avg, node_freq if marginals else None)


def compare_meanfield(params: GeneralParams, init_probs, T: int, runs: int, seed: int):
    """Mean-field average infection against the Monte Carlo ensemble.

    The mean-field run starts at ``x(0) = init_probs``. Returns ``(max_error,
    series)`` where ``series`` has columns ``meanfield_avg, mc_avg, abs_error``.
    """
    traj = simulate(params, np.asarray(init_probs, dtype=float), T)
    mf = traj.states.mean(axis=1)
    mc = monte_carlo(params, init_probs, T, runs, seed, marginals=False).avg_infection
    err = np.abs(mf - mc)
    return float(err.max()), np.column_stack([mf, mc, err])
