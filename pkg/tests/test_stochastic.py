import numpy as np
import pytest

from _instances import random_params
from _setups import table1_params
from hypersis.dynamics import AssumptionViolation, SisParams, simulate
from hypersis.hypergraph import random_ba_hypergraph
from hypersis.stochastic import (
    BLOCK_SIZE,
    build_exact_chain,
    compare_meanfield,
    exact_marginals,
    infection_structure,
    monte_carlo,
)
from hypersis.tensor import SparseCubicalTensor


def isolated(delta, h):
    n = len(delta)
    return SisParams(delta, SparseCubicalTensor(2, n), None, h)


def test_single_agent_recovery():
    chain = build_exact_chain(isolated([1.0], 0.5))
    assert chain.transition[1, 0] == 0.5
    assert chain.transition[1, 1] == 0.5
    assert chain.transition[0, 0] == 1.0


def test_single_edge_infection_probability():
    B = SparseCubicalTensor.from_dict(2, 2, {(0, 1): 0.8})
    chain = build_exact_chain(SisParams([1.0, 1.0], B, None, 0.1))
    # bitmask 0b10: only agent 2 infected
    assert chain.infect_prob[0b10, 0] == pytest.approx(0.1 * 0.8, abs=1e-15)
    assert chain.transition[0b10, 0b11] == pytest.approx(0.08 * 0.9, abs=1e-15)


def test_triple_needs_both_heads():
    n = 3
    H = SparseCubicalTensor.from_dict(3, n, {(0, 1, 2): 1.0})
    chain = build_exact_chain(SisParams([1.0] * 3, SparseCubicalTensor(2, n), H, 0.1))
    assert chain.infect_prob[0b010, 0] == 0.0
    # symmetrized entries (0,1,2) and (0,2,1) each carry 0.5
    assert chain.infect_prob[0b110, 0] == pytest.approx(0.1, abs=1e-15)


def test_rows_sum_to_one():
    rng = np.random.default_rng(50)
    p = random_params(rng, 6)
    T = build_exact_chain(p).transition
    assert np.abs(T.sum(axis=1) - 1).max() <= 1e-12
    assert T.min() >= 0


def test_pure_decay_marginals():
    delta = np.array([0.5, 1.0, 2.0])
    chain = build_exact_chain(isolated(delta, 0.2))
    m = exact_marginals(chain, np.ones(3), 10)
    want = (1 - 0.2 * delta)[None, :] ** np.arange(11)[:, None]
    np.testing.assert_allclose(m, want, atol=1e-14)


def test_marginals_init_forms():
    p = random_params(np.random.default_rng(51), 4)
    chain = build_exact_chain(p)
    init = np.array([0.1, 0.5, 0.9, 0.3])
    m = exact_marginals(chain, init, 3)
    np.testing.assert_allclose(m[0], init, atol=1e-15)
    dist = np.zeros(16)
    dist[0b1010] = 1.0
    m2 = exact_marginals(chain, dist, 2)
    np.testing.assert_allclose(m2[0], [0, 1, 0, 1])
    with pytest.raises(ValueError):
        exact_marginals(chain, np.ones(5), 2)
    with pytest.raises(ValueError):
        exact_marginals(chain, np.full(16, 0.5), 2)


def test_blockwise_propagation_matches_dense():
    rng = np.random.default_rng(52)
    p = random_params(rng, 13, triple_nnz=10)
    chain = build_exact_chain(p)
    dist = rng.random(chain.n_states)
    dist /= dist.sum()
    out = chain.propagate(dist)
    assert out.sum() == pytest.approx(1.0, abs=1e-12)
    # one row of the (too large to cache) dense matrix, built by hand
    s = int(rng.integers(chain.n_states))
    e = np.zeros(chain.n_states)
    e[s] = 1.0
    row = chain.propagate(e)
    q = chain.infect_prob[s]
    t = int(rng.integers(chain.n_states))
    bits = (t >> np.arange(13)) & 1
    assert row[t] == pytest.approx(np.prod(np.where(bits, q, 1 - q)), rel=1e-12)


def test_chain_errors():
    p = random_params(np.random.default_rng(53), 15, triple_nnz=10)
    with pytest.raises(ValueError):
        build_exact_chain(p)
    with pytest.raises(AssumptionViolation):
        build_exact_chain(isolated([3.0], 0.5))
    with pytest.raises(MemoryError):
        build_exact_chain(random_params(np.random.default_rng(54), 13, triple_nnz=5)).transition


def test_infection_structure_merges_permutations():
    H = SparseCubicalTensor.from_dict(3, 3, {(0, 1, 2): 1.0, (0, 2, 1): 1.0})
    B = SparseCubicalTensor.from_dict(2, 3, {(1, 0): 0.5})
    st = infection_structure(SisParams([1.0] * 3, B, H, 0.1))
    assert st.tail.tolist() == [0, 1]
    assert st.weight.tolist() == [2.0, 0.5]
    assert st.entry_ptr.tolist() == [0, 1, 2, 2]


def test_frozen_states():
    p = isolated([0.0, 0.0, 0.0], 0.1)
    res = monte_carlo(p, [0.2, 0.5, 0.9], 5, 1000, seed=1)
    assert np.all(res.avg_infection == res.avg_infection[0])
    assert res.steps == 5


def test_seed_determinism_and_block_rule():
    p = table1_params(h=0.1)
    a = monte_carlo(p, np.full(5, 0.5), 20, 600, seed=3)
    b = monte_carlo(p, np.full(5, 0.5), 20, 600, seed=3)
    c = monte_carlo(p, np.full(5, 0.5), 20, 600, seed=4)
    assert np.array_equal(a.per_node_marginals, b.per_node_marginals)
    assert not np.array_equal(a.avg_infection, c.avg_infection)
    # block b draws from its own spawned stream, so adding one run only adds block 1
    one = monte_carlo(p, np.full(5, 0.5), 20, BLOCK_SIZE, seed=3)
    two = monte_carlo(p, np.full(5, 0.5), 20, BLOCK_SIZE + 1, seed=3)
    extra = two.per_node_marginals * (BLOCK_SIZE + 1) - one.per_node_marginals * BLOCK_SIZE
    np.testing.assert_allclose(extra, np.round(extra), atol=1e-9)
    assert set(np.round(extra).ravel().tolist()) <= {0.0, 1.0}


def test_frozen_monte_carlo_values():
    # regression values; counts over 10000 node-runs are exact in binary floats
    p = table1_params(h=0.1)
    res = monte_carlo(p, np.full(5, 0.5), 10, 2000, seed=11)
    assert res.avg_infection.shape == (11,)
    np.testing.assert_allclose(res.avg_infection[[0, 5, 10]], FROZEN_AVG, atol=0, rtol=0)


def test_monte_carlo_matches_exact_chain():
    rng = np.random.default_rng(55)
    p = random_params(rng, 5)
    init = rng.random(5)
    runs = 20_000
    exact = exact_marginals(build_exact_chain(p), init, 15)
    mc = monte_carlo(p, init, 15, runs, seed=9).per_node_marginals
    se = np.sqrt(np.maximum(exact * (1 - exact), 1e-12) / runs)
    assert np.all(np.abs(mc - exact) <= 4 * se + 1e-12)


def test_monte_carlo_argument_errors():
    p = table1_params()
    with pytest.raises(ValueError):
        monte_carlo(p, np.full(5, 0.5), 3, 0, seed=1)
    with pytest.raises(ValueError):
        monte_carlo(p, np.full(5, 0.5), -1, 10, seed=1)
    with pytest.raises(ValueError):
        monte_carlo(p, np.full(4, 0.5), 3, 10, seed=1)
    with pytest.raises(AssumptionViolation):
        monte_carlo(isolated([3.0], 0.5), [0.5], 3, 10, seed=1)


def test_compare_meanfield_pure_decay():
    p = isolated(np.ones(4), 0.1)
    err, series = compare_meanfield(p, np.full(4, 0.5), 30, 20_000, seed=2)
    assert series.shape == (31, 3)
    np.testing.assert_allclose(series[:, 0], 0.5 * 0.9 ** np.arange(31), atol=1e-15)
    assert err == pytest.approx(series[:, 2].max())
    # 80k Bernoulli draws at t=0: a few standard errors of 0.5/sqrt(8e4)
    assert err < 0.01


def test_meanfield_exact_for_one_step_from_independent_start():
    rng = np.random.default_rng(56)
    p = random_params(rng, 6)
    init = np.full(6, 1 / 3)
    exact = exact_marginals(build_exact_chain(p), init, 30).mean(axis=1)
    mf = simulate(p, init, 30).states.mean(axis=1)
    err = np.abs(mf - exact)
    # with independent initial states the first expected step is the mean-field step;
    # correlations only build up afterwards
    assert err[:2].max() < 1e-14
    assert err[5] > 1e-4


@pytest.mark.slow
def test_meanfield_error_shrinks_with_network_size():
    errs = []
    for n in (10, 30, 102):
        hg = random_ba_hypergraph(n, 3, 3 * n, seed=5)
        p = SisParams.from_rates(hg, np.full(n, 1.0), np.full(n, 0.08), np.full(n, 0.02), 0.1)
        errs.append(compare_meanfield(p, np.full(n, 1 / 3), 200, 1000, seed=5)[0])
    assert errs[2] < errs[0]


FROZEN_AVG = np.array([0.4978, 0.4989, 0.4908])
