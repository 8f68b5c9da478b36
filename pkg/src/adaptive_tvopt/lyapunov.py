"""Lyapunov candidates evaluated along simulated trajectories.

These read the hidden objective parameters and are never used for
control. ``V`` certifies optimality tracking, ``W`` consensus.
"""

from __future__ import annotations

import numpy as np

from .graph import Topology, laplacian
from .objective import ObjectiveModel, oracle_parameters


def _trace_quad(err, gamma):
    """tr(err^T gamma^-1 err)."""
    return float(np.trace(err.T @ np.linalg.solve(gamma, err)))


def v_centralized_si(obj: ObjectiveModel, x, t, eta1_hat, gamma1) -> float:
    omega, A = oracle_parameters(obj)
    grad = obj.grad(x, t)
    eta_err = np.linalg.solve(omega, A) - eta1_hat
    return 0.5 * float(grad @ np.linalg.solve(obj.hessian(x, t), grad)) + 0.5 * _trace_quad(eta_err, gamma1)


def v_centralized_di(obj: ObjectiveModel, x, v, t, eta1_hat, eta2_hat, eta3_hat, gamma1, gamma2, gamma3) -> float:
    omega, A = oracle_parameters(obj)
    grad = obj.grad(x, t)
    hinv = np.linalg.inv(obj.h_fn(x, t))
    v_star = -grad - hinv @ (eta1_hat @ obj.g_fn(x, t))
    zeta = np.asarray(v) - v_star
    return (
        0.5 * float(grad @ np.linalg.solve(obj.hessian(x, t), grad))
        + 0.5 * float(zeta @ zeta)
        + 0.5 * _trace_quad(np.linalg.solve(omega, A) - eta1_hat, gamma1)
        + 0.5 * _trace_quad(omega - eta2_hat, gamma2)
        + 0.5 * _trace_quad(A - eta3_hat, gamma3)
    )


def _theta_errors(objs, theta_hats):
    n = len(objs)
    params = [oracle_parameters(o) for o in objs]
    omega_sum = sum(p[0] for p in params)
    return [np.linalg.solve(omega_sum, A) - th / n for (_, A), th in zip(params, theta_hats)]


def _optimality_part(objs, xs, t):
    zeta_n = sum(o.grad(x, t) for o, x in zip(objs, xs))
    h_sum = sum(o.hessian(x, t) for o, x in zip(objs, xs))
    return zeta_n, 0.5 * float(zeta_n @ np.linalg.solve(h_sum, zeta_n))


def v_distributed_si(objs, xs, t, theta_hats, gamma_thetas) -> float:
    _, value = _optimality_part(objs, xs, t)
    errs = _theta_errors(objs, theta_hats)
    return value + 0.5 * sum(_trace_quad(e, gm) for e, gm in zip(errs, gamma_thetas))


def v_distributed_di(objs, xs, vs, t, theta_hats, omega_hats, A_hats, gamma_thetas, gamma_omega, gamma_As) -> float:
    """Optimality candidate for the distributed double-integrator scheme.

    The analysis assumes one shared Omega estimate; agents integrate
    identical copies, so their mean is used here.
    """
    n = len(objs)
    _, value = _optimality_part(objs, xs, t)
    errs = _theta_errors(objs, theta_hats)
    value += 0.5 * sum(_trace_quad(e, gm) for e, gm in zip(errs, gamma_thetas))
    params = [oracle_parameters(o) for o in objs]
    value += 0.5 * sum(_trace_quad(A - A_hat, gm) for (_, A), A_hat, gm in zip(params, A_hats, gamma_As))
    omega = params[0][0]
    value += 0.5 * _trace_quad(omega - np.mean(omega_hats, axis=0), gamma_omega)
    gap = np.zeros_like(np.asarray(xs[0], float))
    for o, x, v, th in zip(objs, xs, vs, theta_hats):
        v_star = -o.grad(x, t) - np.linalg.solve(o.h_fn(x, t), th @ o.g_fn(x, t))
        gap += v_star - v
    return value + 0.5 / n * float(gap @ gap)


def consensus_projection(values) -> np.ndarray:
    """(M kron I) applied to stacked per-agent rows: subtract the mean row."""
    values = np.asarray(values, dtype=float)
    return values - values.mean(axis=0, keepdims=True)


def _beta_penalty(topology: Topology, beta, beta_bar) -> float:
    total = 0.0
    for i in range(topology.n_agents):
        for j in topology.neighbors(i):
            total += (beta[i, j] - beta_bar) ** 2
    return 0.5 * total


def w_distributed_si(topology: Topology, xs, beta, beta_bar: float) -> float:
    e = consensus_projection(xs).ravel()
    return float(e @ e) + _beta_penalty(topology, beta, beta_bar)


def w_distributed_di(topology: Topology, xs, vs, beta, beta_bar: float, k1: float, k2: float) -> float:
    e = consensus_projection(xs)
    delta = consensus_projection(vs)
    m = e.shape[1]
    lap_m = np.kron(laplacian(topology), np.eye(m))
    ev, dv = e.ravel(), delta.ravel()
    quad = 2 * k1 * k2 * float(ev @ lap_m @ ev) + 2 * k1 * float(ev @ dv) + k2 * float(dv @ dv)
    return quad + _beta_penalty(topology, beta, beta_bar)


def lyapunov_diagnostics(kind: str, **state) -> dict[str, float]:
    """Evaluate the candidate(s) matching a controller kind.

    ``state`` holds the keyword arguments of the matching ``v_*``/``w_*``
    functions; W is included for the distributed kinds when ``beta`` and
    ``beta_bar`` are supplied.
    """
    if kind == "centralized_si":
        return {"V": v_centralized_si(**state)}
    if kind == "centralized_di":
        return {"V": v_centralized_di(**state)}
    if kind == "distributed_si":
        topo, beta, beta_bar = state.pop("topology"), state.pop("beta"), state.pop("beta_bar")
        return {
            "V": v_distributed_si(**state),
            "W": w_distributed_si(topo, state["xs"], beta, beta_bar),
        }
    if kind == "distributed_di":
        topo, beta, beta_bar = state.pop("topology"), state.pop("beta"), state.pop("beta_bar")
        k1, k2 = state.pop("k1"), state.pop("k2")
        return {
            "V": v_distributed_di(**state),
            "W": w_distributed_di(topo, state["xs"], state["vs"], beta, beta_bar, k1, k2),
        }
    raise ValueError(f"no Lyapunov candidate for controller kind {kind!r}")
