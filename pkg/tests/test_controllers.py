import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptive_tvopt import controllers as ctl
from adaptive_tvopt import scenarios
from adaptive_tvopt.graph import Topology
from adaptive_tvopt.objective import build_quadratic_tracking, oracle_parameters
from adaptive_tvopt.oracle import optimal_rate, oracle_solve
from adaptive_tvopt.trajectories import Harmonic, sin_cos

SIN = Harmonic((1.0,), (0.0,), (1.0,))
PARAMS = ctl.SmoothingParams(epsilon=0.1, c=0.1, dim=1)


def _scalar_sin(K=1.0, gain=None):
    return build_quadratic_tracking(1, K, SIN.value, SIN.rate, SIN.accel, gain=gain)


def _eye(v=1.0, m=1):
    return v * np.eye(m)


# -- smoothing ---------------------------------------------------------------


def test_smooth_sign_examples():
    assert ctl.smooth_sign(np.zeros(1), 0.0, PARAMS)[0] == 0.0
    assert ctl.smooth_sign(np.array([0.1]), 0.0, PARAMS)[0] == pytest.approx(0.5)
    late = ctl.smooth_sign(np.array([0.1]), 100.0, PARAMS)[0]
    assert late == pytest.approx(0.1 / (0.1 + 0.1 * math.exp(-10.0)), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=4), st.floats(0, 200))
def test_smooth_sign_is_odd_and_bounded(y, t):
    y = np.array(y)
    s = ctl.smooth_sign(y, t, PARAMS)
    assert np.all(np.abs(s) < 1.0)
    np.testing.assert_array_equal(ctl.smooth_sign(-y, t, PARAMS), -s)


def test_smoothing_rejects_nonpositive():
    with pytest.raises(ValueError):
        ctl.SmoothingParams(epsilon=0.0)


# -- centralized single integrator -----------------------------------------


def test_centralized_si_zero_gradient_gives_zero_rates():
    obj = _scalar_sin().view()
    u, d_eta = ctl.centralized_si_step(np.zeros(1), 0.0, obj, ctl.CentralizedSIState(np.zeros((1, 1)), _eye()))
    assert u[0] == 0.0 and d_eta[0, 0] == 0.0


def test_centralized_si_exact_estimate_follows_optimum():
    traj = sin_cos()
    model = build_quadratic_tracking(2, np.diag([1.0, 3.0]), traj.value, traj.rate, traj.accel)
    omega, A = oracle_parameters(model)
    t = 0.7
    x_star = oracle_solve([model], t)
    st_ = ctl.CentralizedSIState(np.linalg.solve(omega, A), _eye(m=2))
    u, d_eta = ctl.centralized_si_step(x_star, t, model.view(), st_)
    np.testing.assert_allclose(u, optimal_rate([model], x_star, t), atol=1e-12)
    np.testing.assert_allclose(d_eta, 0.0, atol=1e-12)


def test_centralized_si_gain_scales_only_estimate_rate():
    obj = _scalar_sin().view()
    x, t, eta = np.array([0.4]), 1.1, np.array([[0.3]])
    u1, d1 = ctl.centralized_si_step(x, t, obj, ctl.CentralizedSIState(eta, _eye()))
    u2, d2 = ctl.centralized_si_step(x, t, obj, ctl.CentralizedSIState(eta, _eye(3.5)))
    np.testing.assert_allclose(u1, u2)
    np.testing.assert_allclose(d2, 3.5 * d1)


def test_singular_factor_raises():
    model = _scalar_sin()
    bad = model.view()
    object.__setattr__(bad, "h_fn", lambda x, t: np.zeros((1, 1)))
    with pytest.raises(ctl.SingularFactorError, match="singular"):
        ctl.centralized_si_step(np.zeros(1), 0.0, bad, ctl.CentralizedSIState(np.zeros((1, 1)), _eye()))


# -- centralized double integrator -----------------------------------------


def _di_state(eta1, eta2, eta3, m=1, gamma=1.0):
    return ctl.CentralizedDIState(eta1, eta2, eta3, _eye(gamma, m), _eye(gamma, m), _eye(gamma, m))


def test_centralized_di_origin_example():
    obj = _scalar_sin().view()
    z = np.zeros((1, 1))
    rates = ctl.centralized_di_step(np.zeros(1), np.zeros(1), 0.0, obj, _di_state(z, z, z))
    for arr in rates:
        np.testing.assert_allclose(arr, 0.0, atol=1e-15)


def test_centralized_di_exact_estimates_keep_optimal_path():
    traj = sin_cos()
    model = build_quadratic_tracking(2, np.diag([2.0, 0.5]), traj.value, traj.rate, traj.accel)
    omega, A = oracle_parameters(model)
    t = 1.3
    x = oracle_solve([model], t)
    v = optimal_rate([model], x, t)
    st_ = _di_state(np.linalg.solve(omega, A), omega, A, m=2)
    rates = ctl.centralized_di_step(x, v, t, model.view(), st_)
    for d in rates[1:]:
        np.testing.assert_allclose(d, 0.0, atol=1e-12)
    # u equals the acceleration of the optimal path
    h = 1e-5
    accel = (optimal_rate([model], oracle_solve([model], t + h), t + h)
             - optimal_rate([model], oracle_solve([model], t - h), t - h)) / (2 * h)
    np.testing.assert_allclose(rates.u, accel, atol=1e-8)


def test_centralized_di_frozen_eta2_still_defines_u():
    obj = _scalar_sin().view()
    st_ = ctl.CentralizedDIState(np.array([[0.2]]), np.array([[1.5]]), np.array([[-0.4]]), _eye(), _eye(0.0), _eye())
    rates = ctl.centralized_di_step(np.array([0.5]), np.array([0.1]), 0.3, obj, st_)
    assert np.all(np.isfinite(rates.u))
    np.testing.assert_array_equal(rates.d_eta2, 0.0)


# -- finite-time average tracking -------------------------------------------


def test_dat_examples():
    pair = Topology.path(2)
    np.testing.assert_allclose(ctl.dat_estimator_step([[1.0], [0.0]], pair, 2.0), [[-2.0], [2.0]])
    np.testing.assert_array_equal(ctl.dat_estimator_step(np.ones((5, 2)), Topology.cycle(5), 3.0), 0.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_dat_conserves_sum(n, seed):
    rng = np.random.default_rng(seed)
    w = np.triu((rng.random((n, n)) < 0.5).astype(float), 1)
    topo = Topology(w + w.T)
    xi = rng.normal(size=(n, 3))
    xi[0] = xi[-1]  # force some exact ties
    rates = ctl.dat_estimator_step(xi, topo, float(rng.uniform(0.1, 10)))
    np.testing.assert_allclose(rates.sum(axis=0), 0.0, atol=1e-12)


# -- distributed single integrator -------------------------------------------


def _si_agent(sigma=0.0, beta=None, theta=0.0, alpha=5.0):
    return ctl.DistributedSIAgentState(np.array([sigma]), beta or {}, np.array([[theta]]), _eye(), alpha)


def test_distributed_si_two_agent_example():
    obj = _scalar_sin().view()
    # phi is known in closed form here, so the consensus part is u - phi
    st_ = _si_agent(beta={1: 1.0})
    rates = ctl.distributed_si_step(
        np.array([1.0]), 0.0, obj, st_, {1: np.array([0.0])}, {1: np.array([0.0])}, 2, PARAMS
    )
    phi = -obj.grad(np.array([1.0]), 0.0)
    assert rates.u[0] - phi[0] == pytest.approx(-1.0 / 1.1)
    assert rates.d_beta[1] == pytest.approx(0.9)


def test_distributed_si_gain_decays_at_consensus():
    obj = _scalar_sin().view()
    t = 3.0
    rates = ctl.distributed_si_step(
        np.array([0.2]), t, obj, _si_agent(beta={1: 2.0}), {1: np.array([0.2])}, {1: np.array([0.0])}, 2, PARAMS
    )
    assert rates.d_beta[1] == pytest.approx(-0.1 * math.exp(-0.1 * t))


def test_distributed_si_theta_rate_vanishes_with_xi():
    obj = _scalar_sin().view()
    x = np.array([0.0])
    grad = obj.grad(x, 0.5)
    rates = ctl.distributed_si_step(x, 0.5, obj, _si_agent(sigma=-grad[0]), {}, {}, 3, PARAMS)
    np.testing.assert_array_equal(rates.d_theta, 0.0)


def test_clamped_beta_stops_at_zero():
    obj = _scalar_sin().view()
    args = (np.array([0.2]), 1.0, obj, _si_agent(beta={1: 0.0}), {1: np.array([0.2])}, {1: np.zeros(1)}, 2, PARAMS)
    assert ctl.distributed_si_step(*args).d_beta[1] < 0
    assert ctl.distributed_si_step(*args, clamp_beta=True).d_beta[1] == 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_beta_rates_symmetric(seed):
    rng = np.random.default_rng(seed)
    topo = Topology.cycle(5)
    objs = [_scalar_sin(gain=[[c]]).view() for c in (0.6, 0.8, 1.0, 1.2, 1.4)]
    xs = rng.normal(size=(5, 1))
    xis = rng.normal(size=(5, 1))
    t = float(rng.uniform(0, 20))
    beta = rng.uniform(0, 3, size=(5, 5))
    beta = beta + beta.T
    d = {}
    for i in range(5):
        nb = topo.neighbors(i)
        st_ = _si_agent(beta={j: beta[i, j] for j in nb})
        rates = ctl.distributed_si_step(xs[i], t, objs[i], st_, {j: xs[j] for j in nb}, {j: xis[j] for j in nb}, 5, PARAMS)
        d.update({(i, j): r for j, r in rates.d_beta.items()})
    for (i, j), r in d.items():
        assert r == d[(j, i)]


def test_distributed_si_is_local():
    topo = Topology.cycle(5)
    obj = _scalar_sin().view()
    xs = np.arange(5.0).reshape(5, 1)
    nb = topo.neighbors(0)
    st_ = _si_agent(beta={j: 1.0 for j in nb})
    base = ctl.distributed_si_step(xs[0], 1.0, obj, st_, {j: xs[j] for j in nb}, {j: xs[j] for j in nb}, 5, PARAMS)
    xs[2] += 100.0  # agent 2 is not a neighbour of agent 0 on the ring
    again = ctl.distributed_si_step(xs[0], 1.0, obj, st_, {j: xs[j] for j in nb}, {j: xs[j] for j in nb}, 5, PARAMS)
    np.testing.assert_array_equal(base.u, again.u)


# -- distributed summation ----------------------------------------------------


def test_summation_examples():
    np.testing.assert_allclose(ctl.distributed_summation(np.arange(1.0, 6.0)[:, None], Topology.cycle(5)), 15.0)
    star = ctl.distributed_summation(np.array([[10.0], [1.0], [2.0], [3.0]]), Topology.star(4))
    np.testing.assert_allclose(star, 16.0)
    vals = np.random.default_rng(0).normal(size=(6, 2))
    np.testing.assert_allclose(ctl.distributed_summation(vals, Topology.complete(6)), np.tile(vals.sum(0), (6, 1)))


def test_summation_refuses_uncovered_pair():
    with pytest.raises(ctl.UncoveredPairError, match="agents 0 and 3") as info:
        ctl.distributed_summation(np.ones((4, 1)), Topology.path(4))
    assert info.value.pair == (0, 3)


# -- distributed double integrator -----------------------------------------


def _di_agent(beta, k1=2.0, k2=1.0, m=1, gamma_omega=1.0):
    z = np.zeros((m, m))
    return ctl.DistributedDIAgentState(beta, z, z, z, _eye(m=m), _eye(gamma_omega, m), _eye(m=m), k1, k2)


def _zero_aggregates(m=1):
    return ctl.GlobalAggregates(np.zeros(m), np.zeros(m), np.zeros(m))


def test_distributed_di_two_agent_example():
    flat = build_quadratic_tracking(1, 1.0, lambda t: np.zeros(1), lambda t: np.zeros(1)).view()
    x = np.array([0.0])  # at the flat optimum, so phi = 0 with zero estimates
    rates = ctl.distributed_di_step(
        x, np.zeros(1), 0.0, flat, _di_agent({1: 1.0}), {1: np.array([-1.0])}, {1: np.zeros(1)},
        _zero_aggregates(), 2, PARAMS,
    )
    assert rates.u[0] == pytest.approx(-2.0 - 2.0 / 2.1)
    assert rates.d_beta[1] == pytest.approx(1.9)


def test_distributed_di_equilibrium_rates_vanish():
    obj = _scalar_sin().view()
    x, v = np.array([0.3]), np.array([-0.2])
    rates = ctl.distributed_di_step(
        x, v, 2.0, obj, _di_agent({1: 1.0}), {1: x.copy()}, {1: v.copy()}, _zero_aggregates(), 2, PARAMS
    )
    for d in (rates.d_theta, rates.d_omega, rates.d_A):
        np.testing.assert_array_equal(d, 0.0)


def test_distributed_di_omega_gain_scaling():
    obj = _scalar_sin().view()
    agg = ctl.GlobalAggregates(np.array([0.4]), np.array([1.2]), np.array([-0.7]))
    args = (np.array([0.3]), np.array([0.5]), 1.0, obj)
    nbr = ({1: np.array([0.0])}, {1: np.array([0.1])}, agg, 2, PARAMS)
    r1 = ctl.distributed_di_step(*args, _di_agent({1: 0.5}), *nbr)
    r2 = ctl.distributed_di_step(*args, _di_agent({1: 0.5}, gamma_omega=4.0), *nbr)
    np.testing.assert_allclose(r1.u, r2.u)
    np.testing.assert_allclose(r2.d_omega, 4.0 * r1.d_omega)


def test_distributed_di_rejects_bad_aggregates():
    obj = _scalar_sin().view()
    with pytest.raises(ValueError, match="aggregate"):
        ctl.distributed_di_step(
            np.zeros(1), np.zeros(1), 0.0, obj, _di_agent({}), {}, {}, _zero_aggregates(m=2), 1, PARAMS
        )


def test_distributed_di_is_local():
    topo = Topology.cycle(5)
    obj = _scalar_sin().view()
    xs = np.arange(5.0).reshape(5, 1)
    vs = np.ones((5, 1))
    nb = topo.neighbors(0)
    agg = ctl.GlobalAggregates(np.array([0.4]), np.array([1.2]), np.array([-0.7]))

    def u0():
        return ctl.distributed_di_step(
            xs[0], vs[0], 1.0, obj, _di_agent({j: 1.0 for j in nb}),
            {j: xs[j] for j in nb}, {j: vs[j] for j in nb}, agg, 5, PARAMS,
        ).u

    before = u0()
    xs[3] -= 50.0
    vs[2] += 9.0
    np.testing.assert_array_equal(before, u0())


def test_network_rates_match_per_agent_step():
    from adaptive_tvopt.sim import build_closed_loop

    sc = scenarios.builtin("quad_si_dist")
    loop = build_closed_loop(sc)
    rng = np.random.default_rng(7)
    for _ in range(5):
        y = rng.normal(size=loop.y0.shape)
        t = float(rng.uniform(0, 20))
        np.testing.assert_allclose(loop.rhs(t, y, None), loop._rhs_per_agent(t, y), rtol=1e-12, atol=1e-12)

    n, m = 4, 2
    adj = np.array([[0, 1, 1, 0], [1, 0, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0]], float)
    topo = Topology(adj)
    xs, grads, gs, sigma = (rng.normal(size=(n, m)) for _ in range(4))
    hinvs = np.array([np.linalg.inv(np.eye(m) + 0.1 * rng.normal(size=(m, m))) for _ in range(n)])
    thetas, gammas = rng.normal(size=(n, m, m)), np.array([np.eye(m) * (i + 1) for i in range(n)])
    beta = rng.uniform(0, 2, size=(n, n)) * adj
    params = ctl.SmoothingParams(0.1, 0.1, m)
    u, ds, db, dth = ctl.distributed_si_rates_all(xs, 0.7, grads, gs, hinvs, sigma, beta, thetas, gammas, adj, params, 3.0)
    xis = sigma + grads
    for i in range(n):
        view = SimpleNamespace(g_fn=lambda x, t, i=i: gs[i], h_fn=lambda x, t, i=i: np.linalg.inv(hinvs[i]))
        st = ctl.DistributedSIAgentState(sigma[i], {j: beta[i, j] for j in topo.neighbors(i)}, thetas[i], gammas[i], 3.0)
        r = ctl.distributed_si_step(xs[i], 0.7, view, st, {j: xs[j] for j in topo.neighbors(i)},
                                {j: xis[j] for j in topo.neighbors(i)}, n, params, grad=grads[i])
        np.testing.assert_allclose(u[i], r.u, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(ds[i], r.d_sigma, atol=1e-12)
        np.testing.assert_allclose(dth[i], r.d_theta, rtol=1e-10, atol=1e-12)
        for j, rate in r.d_beta.items():
            assert db[i, j] == pytest.approx(rate, abs=1e-12)
        assert all(db[i, j] == 0.0 for j in range(n) if adj[i, j] == 0)


@pytest.mark.parametrize("plant", ["vehicle", "double_integrator"])
def test_network_second_order_rates_match_per_agent_step(plant):
    from adaptive_tvopt.config import from_dict
    from adaptive_tvopt.sim import build_closed_loop

    d = scenarios.source_seek(plant=plant)
    d["initial"]["beta"] = 0.7
    loop = build_closed_loop(from_dict(d))
    rng = np.random.default_rng(11)
    for _ in range(5):
        y = rng.normal(size=loop.y0.shape)
        t = float(rng.uniform(0, 20))
        frozen = loop.prepare(t, y)
        np.testing.assert_allclose(loop.rhs(t, y, frozen), loop._rhs_per_agent(t, y, frozen), rtol=1e-11, atol=1e-11)
