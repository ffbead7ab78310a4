import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _instances import random_params, random_tensor, scalar_step, strongly_connected
from _setups import bivirus_params, config_params, table1_params
from hypersis.dynamics import (
    AssumptionViolation,
    BiVirusParams,
    GeneralParams,
    NotAnEquilibrium,
    NotConverged,
    SisParams,
    cluster_states,
    error_dynamics_general,
    error_dynamics_tensors,
    evaluate_polynomial_map,
    find_equilibrium,
    fixed_point_map,
    run_to_rest,
    simulate,
    step,
    step_bivirus,
    step_general,
    step_many,
    step_residual,
    validate_assumptions,
)
from hypersis.tensor import SparseCubicalTensor


def no_edges(n):
    return SparseCubicalTensor(2, n)


def scalar_step_general(params, x):
    """Loop over every index tuple of every tensor."""
    n = params.n
    B = params.B.to_dense()
    dense = {k: T.to_dense() for k, T in params.F.items()}
    out = np.empty(n)
    for i in range(n):
        s = sum(B[i, j] * x[j] for j in range(n))
        for k, D in dense.items():
            for rest in itertools.product(range(n), repeat=k - 1):
                s += D[(i, *rest)] * np.prod([x[j] for j in rest])
        out[i] = x[i] + params.h * (-params.delta[i] * x[i] + (1 - x[i]) * s)
    return out


# -- parameter objects --------------------------------------------------------------------


def test_params_symmetrize_and_validate_shapes():
    H = SparseCubicalTensor.from_dict(3, 3, {(0, 1, 2): 1.0})
    p = SisParams([1, 1, 1], strongly_connected(np.random.default_rng(0), 3), H, 0.1)
    assert p.H[(0, 2, 1)] == 0.5
    with pytest.raises(ValueError):
        SisParams([1, 1], no_edges(3), None, 0.1)
    with pytest.raises(ValueError):
        SisParams([1, 1, 1], no_edges(3), None, 0.0)
    with pytest.raises(ValueError):
        GeneralParams(np.ones(3), no_edges(3), {4: H}, 0.1)


def test_from_rates_scales_rows():
    p = table1_params()
    assert p.B[(0, 3)] == pytest.approx(0.6 * 0.4896, abs=1e-15)
    assert p.H[(0, 3, 4)] == pytest.approx(0.6 * 0.2819, abs=1e-15)


def test_from_rates_requires_rates_for_present_orders():
    from hypersis.hypergraph import DirectedHypergraph

    hg = DirectedHypergraph(4, ((0, (1,)), (1, (2, 3))))
    with pytest.raises(ValueError):
        GeneralParams.from_rates(hg, [1] * 4, [1] * 4, {}, 0.1)


# -- assumptions -------------------------------------------------------------------------


def test_boundary_h_delta_one():
    p = SisParams([1.0], no_edges(1), None, 1.0)
    weak = validate_assumptions(p, "weak", [0.0])
    strict = validate_assumptions(p, "strict", [0.0])
    assert weak.ok
    assert not strict.ok
    assert [c.name for c in strict.failed()] == ["h*(delta + pairwise + higher row sums) < 1"]


def test_table1_satisfies_everything():
    p = table1_params()
    for mode in ("weak", "strict"):
        rep = validate_assumptions(p, mode, np.full(5, 0.5))
        assert rep.ok, rep.failed()
    assert validate_assumptions(p, "A3a").mode == "weak"


def test_bivirus_setup_satisfies_everything():
    bp = bivirus_params()
    x = (np.full(5, 0.3), np.full(5, 0.3))
    for mode in ("weak", "strict"):
        assert validate_assumptions(bp, mode, x).ok


def test_report_flags_each_violation():
    B = SparseCubicalTensor.from_dict(2, 2, {(0, 1): -1.0})
    p = SisParams([1.0, 0.0], B, None, 0.1)
    rep = validate_assumptions(p, "weak", [0.5, 1.5])
    failed = {c.name for c in rep.failed()}
    assert {"x0 in [0,1]^n", "curing rates positive", "B nonnegative", "B irreducible"} <= failed
    assert rep["curing rates positive"].margin == 0.0
    assert "checks" in rep.to_dict()
    with pytest.raises(ValueError):
        validate_assumptions(p, "medium")


def test_simplex_violation_reported():
    rep = validate_assumptions(bivirus_params(), "weak", (np.full(5, 0.6), np.full(5, 0.6)))
    assert not rep["(x1, x2) in simplex set"].holds


# -- update maps -------------------------------------------------------------------------


def test_pure_decay_and_healthy_fixed_point():
    p = SisParams([1.0], no_edges(1), None, 0.5)
    assert step(p, [0.8]) == pytest.approx([0.4], abs=1e-15)
    q = table1_params()
    assert np.array_equal(step(q, np.zeros(5)), np.zeros(5))


def test_step_matches_scalar_loops():
    rng = np.random.default_rng(11)
    for _ in range(25):
        p = random_params(rng, int(rng.integers(2, 7)))
        x = rng.random(p.n)
        want = scalar_step(p.delta, p.B.to_dense(), p.H.to_dense(), p.h, x)
        np.testing.assert_allclose(step(p, x), want, atol=1e-14, rtol=0)


def test_step_general_matches_scalar_loops_order4():
    rng = np.random.default_rng(12)
    for _ in range(10):
        p = random_params(rng, int(rng.integers(3, 6)), k_max=4)
        x = rng.random(p.n)
        np.testing.assert_allclose(step_general(p, x), scalar_step_general(p, x), atol=1e-14, rtol=0)
        assert np.array_equal(step_general(p, np.zeros(p.n)), np.zeros(p.n))
        with pytest.raises(ValueError):
            step(p, x)


def test_general_reduces_to_third_order():
    rng = np.random.default_rng(13)
    p = random_params(rng, 5)
    g = GeneralParams(p.delta, p.B, {3: p.H}, p.h)
    x = rng.random(5)
    np.testing.assert_allclose(step_general(g, x), step(p, x), atol=1e-14, rtol=0)


def test_step_many_matches_step():
    rng = np.random.default_rng(14)
    p = random_params(rng, 6, k_max=4)
    X = rng.random((7, 6))
    np.testing.assert_allclose(step_many(p, X), np.array([step_general(p, x) for x in X]), atol=1e-15)


def test_step_rejects_bad_inputs_unless_forced():
    p = SisParams([3.0], no_edges(1), None, 0.5)
    with pytest.raises(AssumptionViolation):
        step(p, [0.5])
    # forcing applies the update without clamping
    assert step(p, [0.5], force=True)[0] == pytest.approx(-0.25)
    q = table1_params()
    with pytest.raises(AssumptionViolation):
        step(q, np.full(5, 1.2))
    with pytest.raises(ValueError):
        step(q, np.zeros(4))


def test_bivirus_matches_scalar_loops_and_reduces():
    rng = np.random.default_rng(15)
    for _ in range(10):
        n = int(rng.integers(3, 6))
        v1 = random_params(rng, n, h=0.05)
        v2 = random_params(rng, n, h=0.05)
        bp = BiVirusParams(v1, v2)
        w = rng.dirichlet(np.ones(3), size=n)
        x1, x2 = w[:, 0], w[:, 1]
        y1, y2 = step_bivirus(bp, x1, x2, force=True)
        for v, x, y in ((v1, x1, y1), (v2, x2, y2)):
            B, H = v.B.to_dense(), v.H.to_dense()
            want = np.empty(n)
            for i in range(n):
                s = sum(B[i, j] * x[j] + sum(H[i, j, k] * x[j] * x[k] for k in range(n)) for j in range(n))
                want[i] = x[i] + v.h * (-v.delta[i] * x[i] + (1 - x1[i] - x2[i]) * s)
            np.testing.assert_allclose(y, want, atol=1e-14, rtol=0)
        z1, z2 = step_bivirus(bp, x1, np.zeros(n), force=True)
        assert np.array_equal(z2, np.zeros(n))
        np.testing.assert_allclose(z1, step(v1, x1, force=True), atol=1e-15, rtol=0)


def test_bivirus_zero_and_simplex_error():
    bp = bivirus_params()
    y1, y2 = step_bivirus(bp, np.zeros(5), np.zeros(5))
    assert not y1.any() and not y2.any()
    with pytest.raises(AssumptionViolation):
        step_bivirus(bp, np.full(5, 0.7), np.full(5, 0.7))


def test_params_mismatch_in_bivirus():
    with pytest.raises(ValueError):
        BiVirusParams(table1_params(0.01), table1_params(0.02))


# -- invariance properties ---------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 7), st.floats(0.5, 1.0))
def test_box_invariance(seed, n, factor):
    rng = np.random.default_rng(seed)
    delta = rng.uniform(0.1, 2.0, size=n)
    B = strongly_connected(rng, n)
    H = random_tensor(rng, 3, n, 2 * n)
    rows = B.row_sums() + H.row_sums()
    h = factor / max(delta.max(), rows.max())
    p = SisParams(delta, B, H, h)
    assert validate_assumptions(p, "weak").ok or not validate_assumptions(p, "weak")["B irreducible"].holds
    for x in (rng.random(n), np.ones(n), np.zeros(n), (rng.random(n) < 0.5).astype(float)):
        y = step(p, x)
        assert y.min() >= 0.0 and y.max() <= 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_simplex_invariance(seed, n):
    rng = np.random.default_rng(seed)
    v1 = random_params(rng, n)
    v2 = random_params(rng, n)
    h = 0.9 / (v1.delta.max() + v2.delta.max() + (v1.B.row_sums() + v1.H.row_sums() + v2.B.row_sums() + v2.H.row_sums()).max())
    bp = BiVirusParams(SisParams(v1.delta, v1.B, v1.H, h), SisParams(v2.delta, v2.B, v2.H, h))
    w = rng.dirichlet(np.ones(3), size=n)
    traj = simulate(bp, (w[:, 0], w[:, 1]), 50)
    assert traj.states.min() >= 0.0
    assert traj.states.sum(axis=1).max() <= 1.0 + 1e-15


# -- simulation --------------------------------------------------------------------------


def test_simulate_zero_steps_and_shapes():
    p = table1_params()
    x0 = np.full(5, 0.5)
    traj = simulate(p, x0, 0)
    assert traj.states.shape == (1, 5)
    assert np.array_equal(traj.final, x0)
    bt = simulate(bivirus_params(), (np.full(5, 0.2), np.full(5, 0.3)), 3)
    assert bt.states.shape == (4, 2, 5) and bt.is_bivirus
    with pytest.raises(ValueError):
        simulate(p, x0, -1)
    with pytest.raises(AssumptionViolation):
        simulate(p, np.full(5, 2.0), 3)


def test_simulate_is_deterministic_and_consistent_with_step():
    p = table1_params()
    x0 = np.full(5, 0.5)
    a = simulate(p, x0, 20)
    b = simulate(p, x0, 20)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.states[1], step(p, x0))


def test_run_to_rest_reports_convergence():
    p = config_params(0)
    res = run_to_rest(p, np.full(5, 0.05), tol=1e-10)
    assert res.converged and res.residual < 1e-10
    short = run_to_rest(p, np.full(5, 0.05), tol=1e-10, max_steps=5)
    assert not short.converged and short.steps == 5


# -- equilibria --------------------------------------------------------------------------


def test_fixed_point_map_examples():
    p = table1_params()
    assert np.array_equal(fixed_point_map(p, np.zeros(5)), np.zeros(5))
    # unit pressure per agent gives g = 1
    B = SparseCubicalTensor.from_dict(2, 2, {(0, 1): 2.0, (1, 0): 3.0})
    q = SisParams([2.0, 3.0], B, None, 0.1)
    np.testing.assert_allclose(fixed_point_map(q, np.ones(2)), [0.5, 0.5], atol=1e-15)


def test_equilibrium_consistency():
    p = config_params(1)
    xbar = find_equilibrium(p)
    assert step_residual(p, xbar) <= 1e-10
    np.testing.assert_allclose(fixed_point_map(p, xbar), xbar, atol=1e-10)
    assert xbar.min() > 0.5


def test_equilibrium_in_healthy_regime_is_zero():
    p = config_params(0)
    assert np.abs(find_equilibrium(p)).max() < 1e-10


def test_fixed_points_of_step_are_fixed_points_of_map():
    rng = np.random.default_rng(16)
    for _ in range(5):
        p = random_params(rng, 5)
        p = SisParams(p.delta, p.B * 3.0, p.H, p.h / 3.0)
        xbar = run_to_rest(p, np.ones(5), tol=1e-14).state
        if step_residual(p, xbar) < 1e-13:
            np.testing.assert_allclose(fixed_point_map(p, xbar), xbar, atol=1e-10)


def test_find_equilibrium_not_converged():
    p = config_params(2)
    with pytest.raises(NotConverged) as info:
        find_equilibrium(p, max_iters=3)
    assert info.value.iterations == 3
    assert info.value.best.shape == (5,)
    with pytest.raises(ValueError):
        find_equilibrium(p, init=-np.ones(5))


def test_cluster_states():
    s = [np.zeros(2), np.array([1e-7, 0.0]), np.ones(2)]
    reps = cluster_states(s)
    assert len(reps) == 2


def test_bivirus_equilibria_obey_strict_bounds():
    bp = bivirus_params(first=False)
    rng = np.random.default_rng(17)
    for _ in range(3):
        w = rng.dirichlet(np.ones(3), size=5)
        st_ = run_to_rest(bp, (w[:, 0], w[:, 1]), tol=1e-12).state
        for comp in st_:
            nz = comp[np.abs(comp) > 1e-9]
            assert nz.size in (0, 5)
            assert np.all((nz > 0) & (nz < 1))
        assert st_.sum(axis=0).max() < 1 - 1e-9


# -- error dynamics ----------------------------------------------------------------------


def test_error_tensors_at_healthy_state():
    rng = np.random.default_rng(18)
    p = random_params(rng, 4)
    K1, K2, K3 = error_dynamics_tensors(p, np.zeros(4))
    h = p.h
    np.testing.assert_allclose(K1, np.eye(4) - h * np.diag(p.delta) + h * p.B.to_dense(), atol=1e-15)
    assert K2.allclose(p.H * h - p.B.lift() * h, atol=1e-15)
    assert K3.allclose(p.H.lift() * (-h), atol=1e-15)


def test_error_tensors_without_triples():
    rng = np.random.default_rng(19)
    p = random_params(rng, 4)
    q = SisParams(p.delta * 0.2, p.B, None, p.h)
    xbar = find_equilibrium(q, tol=1e-14)
    _, K2, K3 = error_dynamics_tensors(q, xbar)
    assert K2.allclose(q.B.lift() * (-q.h), atol=1e-15)
    assert K3.nnz == 0


def test_error_tensors_reproduce_step():
    rng = np.random.default_rng(20)
    for _ in range(10):
        p = random_params(rng, int(rng.integers(3, 7)))
        p = SisParams(p.delta * 0.3, p.B, p.H, p.h)
        xbar = find_equilibrium(p, tol=1e-14)
        K = error_dynamics_tensors(p, xbar)
        for _ in range(20):
            y = rng.uniform(-1, 1, p.n) * np.minimum(xbar, 1 - xbar)
            want = step(p, xbar + y, force=True) - xbar
            np.testing.assert_allclose(evaluate_polynomial_map(K, y), want, atol=1e-12, rtol=0)


def test_error_general_matches_third_order_and_healthy_order4():
    rng = np.random.default_rng(21)
    p = random_params(rng, 5)
    p = SisParams(p.delta * 0.3, p.B, p.H, p.h)
    xbar = find_equilibrium(p, tol=1e-14)
    K = error_dynamics_tensors(p, xbar)
    G = error_dynamics_general(p, xbar)
    np.testing.assert_allclose(G[0], K[0], atol=1e-14)
    assert G[1].allclose(K[1], atol=1e-14) and G[2].allclose(K[2], atol=1e-14)

    q = random_params(rng, 4, k_max=4)
    G = error_dynamics_general(q, np.zeros(4))
    h = q.h
    np.testing.assert_allclose(G[0], np.eye(4) - h * np.diag(q.delta) + h * q.B.to_dense(), atol=1e-15)
    assert G[1].allclose(q.higher(3) * h - q.B.lift() * h, atol=1e-15)
    assert G[2].allclose(q.higher(4) * h - q.higher(3).lift() * h, atol=1e-15)
    assert G[3].allclose(q.higher(4).lift() * (-h), atol=1e-15)


def test_error_general_reproduces_step_order4():
    rng = np.random.default_rng(22)
    for _ in range(5):
        p = random_params(rng, int(rng.integers(3, 6)), k_max=4)
        p = GeneralParams(p.delta * 0.3, p.B, p.F, p.h)
        xbar = find_equilibrium(p, tol=1e-14)
        G = error_dynamics_general(p, xbar)
        assert len(G) == 4
        for _ in range(20):
            y = rng.uniform(-1, 1, p.n) * np.minimum(xbar, 1 - xbar)
            want = step_general(p, xbar + y, force=True) - xbar
            np.testing.assert_allclose(evaluate_polynomial_map(G, y), want, atol=1e-12, rtol=0)


def test_error_dynamics_rejects_non_equilibrium():
    p = table1_params()
    with pytest.raises(NotAnEquilibrium):
        error_dynamics_tensors(p, np.full(5, 0.5))
    with pytest.raises(NotAnEquilibrium):
        error_dynamics_general(p, np.full(5, 0.5))

