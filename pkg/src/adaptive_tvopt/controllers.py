"""Adaptive tracking controllers as pure rate functions.

Every step function maps the current state and measurements to the
control input and the time derivatives of the adaptive estimates. None
of them integrate anything; :mod:`adaptive_tvopt.sim` owns time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .graph import Topology, has_two_hop_cover, uncovered_pairs
from .objective import ControllerView

COND_LIMIT = 1e12


class SingularFactorError(RuntimeError):
    """The known Hessian factor h(x, t) is numerically singular."""


class UncoveredPairError(ValueError):
    """Two agents are neither neighbours nor share a neighbour."""

    def __init__(self, pair):
        self.pair = pair
        super().__init__(
            f"agents {pair[0]} and {pair[1]} are neither adjacent nor share a common neighbour; "
            "two-round distributed summation cannot reach the global sum"
        )


@dataclass(frozen=True)
class SmoothingParams:
    epsilon: float = 0.1
    c: float = 0.1
    dim: int = 1

    def __post_init__(self):
        if self.epsilon <= 0 or self.c <= 0:
            raise ValueError("smoothing parameters epsilon and c must be positive")

    def layer(self, t: float) -> float:
        """Boundary-layer width epsilon * exp(-c t)."""
        return self.epsilon * math.exp(-self.c * t)


def smooth_sign(y, t: float, params: SmoothingParams) -> np.ndarray:
    """Componentwise y / (|y| + epsilon exp(-c t))."""
    y = np.asarray(y, dtype=float)
    return y / (np.abs(y) + params.layer(t))


def checked_inverse(h: np.ndarray, t: float, x) -> np.ndarray:
    if h.shape == (1, 1):
        if h[0, 0] == 0.0:
            raise SingularFactorError(f"h(x, t) is singular at t={t:.6g}, x={np.asarray(x).tolist()}")
        return 1.0 / h
    try:
        hinv = np.linalg.inv(h)
    except np.linalg.LinAlgError:
        hinv = None
    # 1-norm condition number; avoids an SVD on every call
    cond = np.inf if hinv is None else np.abs(h).sum(axis=0).max() * np.abs(hinv).sum(axis=0).max()
    if not cond < COND_LIMIT:
        raise SingularFactorError(
            f"h(x, t) is singular (condition number {cond:.3g}) at t={t:.6g}, x={np.asarray(x).tolist()}"
        )
    return hinv


def _hinv_feedforward_rate(hinv, hdot, est, est_dot, g, gdot):
    """d/dt (h^-1 est g) by the product rule, d(h^-1)/dt = -h^-1 hdot h^-1."""
    return -hinv @ hdot @ hinv @ est @ g + hinv @ est_dot @ g + hinv @ est @ gdot


# -- centralized single integrator -----------------------------------------


@dataclass
class CentralizedSIState:
    eta1_hat: np.ndarray
    gamma1: np.ndarray


def centralized_si_step(x, t: float, obj: ControllerView, st: CentralizedSIState):
    """Control input and estimate rate for a single-integrator plant.

    Returns ``(u, d_eta1)`` with

        u      = -grad f - h^-1 eta1 g
        d_eta1 = gamma1 h^-T grad f g^T
    """
    grad = obj.grad(x, t)
    g = obj.g_fn(x, t)
    hinv = checked_inverse(obj.h_fn(x, t), t, x)
    u = -grad - hinv @ (st.eta1_hat @ g)
    d_eta1 = st.gamma1 @ np.outer(hinv.T @ grad, g)
    return u, d_eta1


# -- centralized double integrator -----------------------------------------


@dataclass
class CentralizedDIState:
    eta1_hat: np.ndarray
    eta2_hat: np.ndarray
    eta3_hat: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    gamma3: np.ndarray


class CentralizedDIRates(NamedTuple):
    u: np.ndarray
    d_eta1: np.ndarray
    d_eta2: np.ndarray
    d_eta3: np.ndarray


def centralized_di_step(x, v, t: float, obj: ControllerView, st: CentralizedDIState) -> CentralizedDIRates:
    v = np.asarray(v, dtype=float)
    grad = obj.grad(x, t)
    h = obj.h_fn(x, t)
    g = obj.g_fn(x, t)
    hinv = checked_inverse(h, t, x)
    hdot = obj.h_total_deriv(x, v, t)
    gdot = obj.g_total_deriv(x, v, t)

    d_eta1 = st.gamma1 @ np.outer(hinv.T @ grad, g)
    v_star = -grad - hinv @ (st.eta1_hat @ g)
    zeta = v - v_star
    hv = h @ v
    d_eta2 = st.gamma2 @ np.outer(zeta, hv)
    d_eta3 = st.gamma3 @ np.outer(zeta, g)
    feedforward = _hinv_feedforward_rate(hinv, hdot, st.eta1_hat, d_eta1, g, gdot)
    u = -grad - st.eta2_hat @ hv - st.eta3_hat @ g - feedforward
    return CentralizedDIRates(u, d_eta1, d_eta2, d_eta3)


# -- non-adaptive reference --------------------------------------------------


def nonadaptive_si_step(x, t: float, obj: ControllerView, omega_model, A_model, k: float) -> np.ndarray:
    """Model-based tracking law using fixed parameter guesses.

    u = -(omega_model h)^-1 (k grad f + A_model g). Exact tracking only
    when the guesses equal the true parameters.
    """
    grad = obj.grad(x, t)
    H = np.asarray(omega_model) @ obj.h_fn(x, t)
    return -np.linalg.solve(H, k * grad + np.asarray(A_model) @ obj.g_fn(x, t))


# -- distributed single integrator ------------------------------------------


@dataclass
class DistributedSIAgentState:
    sigma: np.ndarray
    beta: dict[int, float]
    theta_hat: np.ndarray
    gamma_theta: np.ndarray
    alpha_est: float


class DistributedSIRates(NamedTuple):
    u: np.ndarray
    d_sigma: np.ndarray
    d_beta: dict[int, float]
    d_theta: np.ndarray


def _dat_rate(xi_i, neighbor_xis: Sequence[np.ndarray], alpha_est: float) -> np.ndarray:
    if not len(neighbor_xis):
        return np.zeros_like(xi_i)
    return -alpha_est * np.sign(xi_i - np.asarray(neighbor_xis)).sum(axis=0)


def dat_estimator_step(xi_all, topology: Topology, alpha_est: float) -> np.ndarray:
    """Finite-time average-tracking estimator rates for every agent.

    ``xi_all`` is ``(N, m)``; returns ``(N, m)`` with
    ``d_sigma_i = -alpha * sum_{j in N_i} sgn(xi_i - xi_j)`` and sgn(0) = 0.
    """
    xi_all = np.asarray(xi_all, dtype=float)
    return np.array(
        [_dat_rate(xi_all[i], [xi_all[j] for j in topology.neighbors(i)], alpha_est) for i in range(len(xi_all))]
    )


def _beta_rate(abs_diff_sum: float, layer: float, dim: int, beta: float, clamp: bool) -> float:
    rate = abs_diff_sum - dim * layer
    if clamp and beta <= 0.0 and rate < 0.0:
        return 0.0
    return rate


def distributed_si_step(
    x_i,
    t: float,
    obj: ControllerView,
    st: DistributedSIAgentState,
    neighbor_x: Mapping[int, np.ndarray],
    neighbor_xi: Mapping[int, np.ndarray],
    n_agents: int,
    params: SmoothingParams,
    clamp_beta: bool = False,
    grad=None,
) -> DistributedSIRates:
    """Rates for agent i of the distributed single-integrator scheme.

    Uses only agent i's own state and what its one-hop neighbours send:
    their positions and their estimator outputs xi_j. ``grad`` lets the
    caller pass the agent's gradient measurement if already taken at (x_i, t).
    """
    x_i = np.asarray(x_i, dtype=float)
    if grad is None:
        grad = obj.grad(x_i, t)
    g = obj.g_fn(x_i, t)
    hinv = checked_inverse(obj.h_fn(x_i, t), t, x_i)
    xi_i = st.sigma + grad

    layer = params.layer(t)
    d_beta = {}
    if neighbor_x:
        ids = list(neighbor_x)
        diff = x_i - np.array([neighbor_x[j] for j in ids])
        abs_diff = np.abs(diff)
        betas = np.array([st.beta[j] for j in ids])
        consensus = -(betas[:, None] * diff / (abs_diff + layer)).sum(axis=0)
        for j, b, total in zip(ids, betas, abs_diff.sum(axis=1)):
            d_beta[j] = _beta_rate(float(total), layer, params.dim, float(b), clamp_beta)
    else:
        consensus = np.zeros_like(x_i)

    phi = -grad - hinv @ (st.theta_hat @ g)
    d_sigma = _dat_rate(xi_i, list(neighbor_xi.values()), st.alpha_est)
    d_theta = n_agents**2 * st.gamma_theta @ ((hinv.T @ xi_i)[:, None] * g[None, :])
    return DistributedSIRates(consensus + phi, d_sigma, d_beta, d_theta)


def distributed_si_rates_all(xs, t, grads, gs, hinvs, sigma, beta, theta_hats, gamma_thetas,
                             adjacency, params: SmoothingParams, alpha_est: float, clamp_beta: bool = False):
    """Every agent's ``distributed_si_step`` at once, as stacked arrays.

    Same law, evaluated with array operations over the whole network;
    entry (i, j) only ever combines agent i with a neighbour j.
    Returns ``(u, d_sigma, d_beta, d_theta)`` shaped (N, m), (N, m),
    (N, N) and (N, m, p).
    """
    n = xs.shape[0]
    mask = np.asarray(adjacency) > 0.0
    layer = params.layer(t)
    diff = xs[:, None, :] - xs[None, :, :]
    abs_diff = np.abs(diff)
    coupling = np.where(mask, beta, 0.0)[:, :, None] * diff / (abs_diff + layer)
    d_beta = np.where(mask, abs_diff.sum(axis=2) - params.dim * layer, 0.0)
    if clamp_beta:
        d_beta = np.where((beta <= 0.0) & (d_beta < 0.0), 0.0, d_beta)

    xi = sigma + grads
    phi = -grads - np.einsum("nij,nj->ni", hinvs, np.einsum("nij,nj->ni", theta_hats, gs))
    d_sigma = -alpha_est * (mask[:, :, None] * np.sign(xi[:, None, :] - xi[None, :, :])).sum(axis=1)
    hx = np.einsum("nji,nj->ni", hinvs, xi)
    d_theta = n**2 * np.einsum("nij,njk->nik", gamma_thetas, hx[:, :, None] * gs[:, None, :])
    return -coupling.sum(axis=1) + phi, d_sigma, d_beta, d_theta


# -- distributed double integrator ------------------------------------------


@dataclass
class DistributedDIAgentState:
    beta: dict[int, float]
    theta_hat: np.ndarray
    omega_hat: np.ndarray
    A_hat: np.ndarray
    gamma_theta: np.ndarray
    gamma_omega: np.ndarray
    gamma_A: np.ndarray
    k1: float
    k2: float


@dataclass(frozen=True)
class GlobalAggregates:
    zeta_n: np.ndarray
    sum_hv: np.ndarray
    zeta_g: np.ndarray


class DistributedDIRates(NamedTuple):
    u: np.ndarray
    d_beta: dict[int, float]
    d_theta: np.ndarray
    d_omega: np.ndarray
    d_A: np.ndarray


def aggregate_terms(x, v, t: float, obj: ControllerView, theta_hat) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Agent-local contributions to (zeta_n, sum h v, zeta_g)."""
    grad = obj.grad(x, t)
    h = obj.h_fn(x, t)
    hinv = checked_inverse(h, t, x)
    g = obj.g_fn(x, t)
    return grad, h @ v, grad + hinv @ (theta_hat @ g) + v


def distributed_summation(local_values, topology: Topology) -> np.ndarray:
    """Exact network sum in two synchronous neighbour-exchange rounds.

    Round one: each agent adds the values its neighbours send. Round two:
    each agent forwards the values it knows together with their owners,
    and the receiver adds those from agents not yet counted. With every
    pair of agents adjacent or sharing a neighbour, this reaches all N.
    """
    values = np.asarray(local_values, dtype=float)
    n = topology.n_agents
    if values.shape[0] != n:
        raise ValueError(f"expected {n} local values, got {values.shape[0]}")
    missing = uncovered_pairs(topology)
    if missing:
        raise UncoveredPairError(missing[0])

    nbrs = [topology.neighbors(i) for i in range(n)]
    # round 1: psi_i[1] = own value + one-hop values; each agent now knows N̄_i
    psi = np.empty_like(values)
    known: list[dict[int, np.ndarray]] = []
    for i in range(n):
        inbox = {j: values[j] for j in nbrs[i]}
        psi[i] = values[i] + sum(inbox.values(), np.zeros_like(values[i]))
        known.append({i: values[i], **inbox})
    # round 2: add values from C = (union of N̄_j over j in N_i) minus N̄_i
    out = np.empty_like(values)
    for i in range(n):
        extra = {}
        for j in nbrs[i]:
            for l, val in known[j].items():
                if l not in known[i]:
                    extra[l] = val
        out[i] = psi[i] + sum((extra[l] for l in sorted(extra)), np.zeros_like(values[i]))
    return out


def distributed_di_step(
    x_i,
    v_i,
    t: float,
    obj: ControllerView,
    st: DistributedDIAgentState,
    neighbor_x: Mapping[int, np.ndarray],
    neighbor_v: Mapping[int, np.ndarray],
    aggregates: GlobalAggregates,
    n_agents: int,
    params: SmoothingParams,
    neighbor_weights: Mapping[int, float] | None = None,
    clamp_beta: bool = False,
) -> DistributedDIRates:
    """Rates for agent i of the distributed double-integrator scheme.

    ``aggregates`` must come from :func:`distributed_summation` run over
    the same snapshot. ``neighbor_weights`` scales the linear consensus
    term per edge (unit weights when omitted).
    """
    x_i = np.asarray(x_i, dtype=float)
    v_i = np.asarray(v_i, dtype=float)
    m = x_i.size
    for name in ("zeta_n", "sum_hv", "zeta_g"):
        if np.shape(getattr(aggregates, name)) != (m,):
            raise ValueError(f"aggregate {name} has shape {np.shape(getattr(aggregates, name))}, expected ({m},)")

    grad = obj.grad(x_i, t)
    h = obj.h_fn(x_i, t)
    g = obj.g_fn(x_i, t)
    hinv = checked_inverse(h, t, x_i)
    hdot = obj.h_total_deriv(x_i, v_i, t)
    gdot = obj.g_total_deriv(x_i, v_i, t)

    linear = np.zeros(m)
    smoothed = np.zeros(m)
    d_beta = {}
    layer = params.layer(t)
    for j, x_j in neighbor_x.items():
        w = 1.0 if neighbor_weights is None else neighbor_weights[j]
        combo = st.k1 * (x_i - x_j) + st.k2 * (v_i - neighbor_v[j])
        abs_combo = np.abs(combo)
        linear -= w * combo
        smoothed -= st.beta[j] * combo / (abs_combo + layer)
        d_beta[j] = _beta_rate(float(abs_combo.sum()), layer, params.dim, st.beta[j], clamp_beta)

    d_theta = n_agents * st.gamma_theta @ np.outer(hinv.T @ aggregates.zeta_n, g)
    d_omega = st.gamma_omega @ np.outer(aggregates.zeta_g, aggregates.sum_hv) / n_agents
    d_A = st.gamma_A @ np.outer(aggregates.zeta_g, g) / n_agents
    feedforward = _hinv_feedforward_rate(hinv, hdot, st.theta_hat, d_theta, g, gdot)
    phi = -grad - st.omega_hat @ (h @ v_i) - st.A_hat @ g - feedforward
    return DistributedDIRates(linear + smoothed + phi, d_beta, d_theta, d_omega, d_A)


def distributed_di_rates_all(xs, vs, t, locals_, estimates, gains, aggregates, adjacency, beta,
                             params: SmoothingParams, clamp_beta: bool = False):
    """Every agent's ``distributed_di_step`` at once, as stacked arrays.

    ``locals_`` is ``(grad, h, g, hinv, hdot, gdot)`` stacked over agents,
    ``estimates`` is ``(theta_hat, omega_hat, A_hat)``, ``gains`` is
    ``(gamma_theta, gamma_omega, gamma_A, k1, k2)`` with per-agent stacks
    for gamma_theta and gamma_A, and ``aggregates`` is the ``(N, 3, m)``
    output of the summation rounds. Returns ``(u, d_beta, d_theta,
    d_omega, d_A)``.
    """
    grad, h, g, hinv, hdot, gdot = locals_
    theta, omega, A = estimates
    gamma_theta, gamma_omega, gamma_A, k1, k2 = gains
    n = xs.shape[0]
    zeta_n, sum_hv, zeta_g = aggregates[:, 0], aggregates[:, 1], aggregates[:, 2]
    weights = np.asarray(adjacency, dtype=float)
    mask = weights > 0.0
    layer = params.layer(t)

    combo = k1 * (xs[:, None, :] - xs[None, :, :]) + k2 * (vs[:, None, :] - vs[None, :, :])
    abs_combo = np.abs(combo)
    linear = -(weights[:, :, None] * combo).sum(axis=1)
    smoothed = -(np.where(mask, beta, 0.0)[:, :, None] * combo / (abs_combo + layer)).sum(axis=1)
    d_beta = np.where(mask, abs_combo.sum(axis=2) - params.dim * layer, 0.0)
    if clamp_beta:
        d_beta = np.where((beta <= 0.0) & (d_beta < 0.0), 0.0, d_beta)

    def mv(mats, vecs):
        return np.einsum("nij,nj->ni", mats, vecs)

    def outer(a, b):
        return a[:, :, None] * b[:, None, :]

    d_theta = n * np.einsum("nij,njk->nik", gamma_theta, outer(np.einsum("nji,nj->ni", hinv, zeta_n), g))
    d_omega = np.einsum("ij,njk->nik", gamma_omega, outer(zeta_g, sum_hv)) / n
    d_A = np.einsum("nij,njk->nik", gamma_A, outer(zeta_g, g)) / n
    theta_g = mv(theta, g)
    feedforward = (-mv(hinv, mv(hdot, mv(hinv, theta_g))) + mv(hinv, mv(d_theta, g)) + mv(hinv, mv(theta, gdot)))
    phi = -grad - mv(omega, mv(h, vs)) - mv(A, g) - feedforward
    return linear + smoothed + phi, d_beta, d_theta, d_omega, d_A
