"""Time-varying local objectives with a parameterised curvature model.

Each objective carries its analytic gradient, Hessian and time-partial of
the gradient, together with the factorisation

    H(x, t)          = Omega @ h(x, t)
    d/dt grad f(x,t) = A @ g(x, t)

where ``h`` and ``g`` are known to the controllers and ``Omega``/``A``
are not. Controllers receive a :class:`ControllerView`, which only
exposes the gradient and the known factors; the true parameters are
reachable through :func:`oracle_parameters` for diagnostics and tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

FD_STEP = 1e-5


@dataclass(frozen=True)
class ObjectiveModel:
    dim: int
    param_dim: int
    eval: Callable[[np.ndarray, float], float]
    grad: Callable[[np.ndarray, float], np.ndarray]
    hessian: Callable[[np.ndarray, float], np.ndarray]
    dgrad_dt: Callable[[np.ndarray, float], np.ndarray]
    h_fn: Callable[[np.ndarray, float], np.ndarray]
    g_fn: Callable[[np.ndarray, float], np.ndarray]
    h_total_deriv: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    g_total_deriv: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    _omega: np.ndarray = field(repr=False)
    _A: np.ndarray = field(repr=False)
    quadratic: bool = False
    kind: str = "custom"

    def view(self, grad_noise: float = 0.0, rng: np.random.Generator | None = None) -> "ControllerView":
        grad = self.grad
        if grad_noise > 0.0:
            if rng is None:
                raise ValueError("grad_noise > 0 requires an rng")
            base = self.grad

            def grad(x, t):
                return base(x, t) + grad_noise * rng.standard_normal(self.dim)

        return ControllerView(
            dim=self.dim,
            param_dim=self.param_dim,
            grad=grad,
            h_fn=self.h_fn,
            g_fn=self.g_fn,
            h_total_deriv=self.h_total_deriv,
            g_total_deriv=self.g_total_deriv,
        )


@dataclass(frozen=True)
class ControllerView:
    """What an agent can measure or compute about its own objective."""

    dim: int
    param_dim: int
    grad: Callable[[np.ndarray, float], np.ndarray]
    h_fn: Callable[[np.ndarray, float], np.ndarray]
    g_fn: Callable[[np.ndarray, float], np.ndarray]
    h_total_deriv: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    g_total_deriv: Callable[[np.ndarray, np.ndarray, float], np.ndarray]


def oracle_parameters(obj: ObjectiveModel) -> tuple[np.ndarray, np.ndarray]:
    """Hidden ``(Omega, A)``. Diagnostics and tests only."""
    return obj._omega.copy(), obj._A.copy()


def _as_matrix(value, m: int, name: str) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(m)
    if a.shape != (m, m):
        raise ValueError(f"{name} must be a scalar or an {m}x{m} matrix, got shape {a.shape}")
    return a


def _check_pd(k: np.ndarray, name: str) -> None:
    if not np.allclose(k, k.T, rtol=0.0, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(k).min() <= 0.0:
        raise ValueError(f"{name} must be positive definite")


def build_quadratic_tracking(m, K, traj, traj_dot, traj_ddot=None, gain=None) -> ObjectiveModel:
    """f(x, t) = (x - c(t))^T K (x - c(t)) with c(t) = gain @ traj(t).

    ``traj`` returns a p-vector; ``gain`` (m x p) defaults to the identity,
    which requires p = m. The decomposition is h = I, g = traj_dot(t),
    Omega = 2K and A = -2 K gain.
    """
    K = _as_matrix(K, m, "K")
    _check_pd(K, "K")
    p = np.atleast_1d(traj(0.0)).size
    B = np.eye(m) if gain is None else np.asarray(gain, dtype=float).reshape(m, p)
    if gain is None and p != m:
        raise ValueError("trajectory dimension differs from m; pass an explicit gain matrix")
    if traj_ddot is None:
        def traj_ddot(t):
            return (np.atleast_1d(traj_dot(t + FD_STEP)) - np.atleast_1d(traj_dot(t - FD_STEP))) / (2 * FD_STEP)

    twoK = 2.0 * K
    A = -twoK @ B
    eye = np.eye(m)
    zeros = np.zeros((m, m))

    def center(t):
        return B @ np.atleast_1d(traj(t))

    def f(x, t):
        d = np.asarray(x, float) - center(t)
        return float(d @ K @ d)

    def grad(x, t):
        return twoK @ (np.asarray(x, float) - center(t))

    return ObjectiveModel(
        dim=m,
        param_dim=p,
        eval=f,
        grad=grad,
        hessian=lambda x, t: twoK.copy(),
        dgrad_dt=lambda x, t: A @ np.atleast_1d(traj_dot(t)),
        h_fn=lambda x, t: eye.copy(),
        g_fn=lambda x, t: np.atleast_1d(np.asarray(traj_dot(t), float)),
        h_total_deriv=lambda x, xdot, t: zeros.copy(),
        g_total_deriv=lambda x, xdot, t: np.atleast_1d(np.asarray(traj_ddot(t), float)),
        _omega=twoK,
        _A=A,
        quadratic=True,
        kind="quadratic_tracking",
    )


def build_power_supply(k1: float, k2: float, r, r_dot, r_ddot=None) -> ObjectiveModel:
    """f(x, t) = (x + k1 r1(t) + k2 r2(t))^2 with scalar x.

    ``r`` returns the pair (r1, r2). This is the quadratic tracking model
    with K = 1 and gain = -(k1, k2).
    """
    obj = build_quadratic_tracking(1, 1.0, r, r_dot, r_ddot, gain=[[-k1, -k2]])
    return _rekind(obj, "power_supply")


def build_source_seek_local(a: float, b, r, r_dot, anchors, r_ddot=None) -> ObjectiveModel:
    """Inverse signal strength plus weighted squared anchor distances.

    F(x, t) = |x - b r(t)|^2 / a + sum_j q_j |x - R_j|^2, where ``anchors``
    is a sequence of ``(q_j, R_j)`` pairs.
    """
    if a <= 0:
        raise ValueError("signal power a must be positive")
    b = np.atleast_2d(np.asarray(b, dtype=float))
    m, p = b.shape
    q = np.array([float(w) for w, _ in anchors]) if anchors else np.zeros(0)
    R = np.array([np.asarray(pos, float) for _, pos in anchors]).reshape(len(q), m)
    if np.any(q < 0):
        raise ValueError("anchor weights must be nonnegative")
    if r_ddot is None:
        def r_ddot(t):
            return (np.atleast_1d(r_dot(t + FD_STEP)) - np.atleast_1d(r_dot(t - FD_STEP))) / (2 * FD_STEP)

    inv_a = 1.0 / a
    curvature = 2.0 * inv_a + 2.0 * q.sum()
    H = curvature * np.eye(m)
    A = -2.0 * inv_a * b
    qR = q @ R if q.size else np.zeros(m)
    eye = np.eye(m)
    zeros = np.zeros((m, m))

    def f(x, t):
        x = np.asarray(x, float)
        d = x - b @ np.atleast_1d(r(t))
        anchor_terms = sum(w * float((x - pos) @ (x - pos)) for w, pos in zip(q, R))
        return float(d @ d) * inv_a + anchor_terms

    def grad(x, t):
        x = np.asarray(x, float)
        return 2.0 * inv_a * (x - b @ np.atleast_1d(r(t))) + 2.0 * (q.sum() * x - qR)

    return ObjectiveModel(
        dim=m,
        param_dim=p,
        eval=f,
        grad=grad,
        hessian=lambda x, t: H.copy(),
        dgrad_dt=lambda x, t: A @ np.atleast_1d(r_dot(t)),
        h_fn=lambda x, t: eye.copy(),
        g_fn=lambda x, t: np.atleast_1d(np.asarray(r_dot(t), float)),
        h_total_deriv=lambda x, xdot, t: zeros.copy(),
        g_total_deriv=lambda x, xdot, t: np.atleast_1d(np.asarray(r_ddot(t), float)),
        _omega=H,
        _A=A,
        quadratic=True,
        kind="source_seek_local",
    )


def _rekind(obj: ObjectiveModel, kind: str) -> ObjectiveModel:
    from dataclasses import replace

    return replace(obj, kind=kind)


# -- checks ---------------------------------------------------------------


def finite_difference_check(obj: ObjectiveModel, x, t: float, step: float = FD_STEP) -> float:
    """Worst relative error of the analytic derivatives against central differences.

    Compares ``grad`` to differences of ``eval``, ``hessian`` to
    differences of ``grad`` in x, and ``dgrad_dt`` to differences of
    ``grad`` in t. Denominators are floored at 1.
    """
    x = np.asarray(x, dtype=float)
    m = obj.dim
    eye = np.eye(m)

    fd_grad = np.array([(obj.eval(x + step * e, t) - obj.eval(x - step * e, t)) / (2 * step) for e in eye])
    fd_hess = np.column_stack([(obj.grad(x + step * e, t) - obj.grad(x - step * e, t)) / (2 * step) for e in eye])
    fd_dt = (obj.grad(x, t + step) - obj.grad(x, t - step)) / (2 * step)

    def rel(a, b):
        return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))

    return max(
        rel(fd_grad, obj.grad(x, t)),
        rel(fd_hess, obj.hessian(x, t)),
        rel(fd_dt, obj.dgrad_dt(x, t)),
    )


@dataclass
class AssumptionResult:
    name: str
    passed: bool
    value: float
    detail: str = ""


@dataclass
class ValidationReport:
    results: dict[str, AssumptionResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def failures(self) -> list[AssumptionResult]:
        return [r for r in self.results.values() if not r.passed]

    def __str__(self) -> str:
        lines = []
        for key, r in self.results.items():
            status = "pass" if r.passed else "FAIL"
            lines.append(f"{key}: {status} ({r.name}; value={r.value:.6g}) {r.detail}".rstrip())
        return "\n".join(lines)


def _agent_points(x, n_agents, m):
    x = np.asarray(x, dtype=float)
    if x.shape == (m,):
        return np.tile(x, (n_agents, 1))
    if x.shape == (n_agents, m):
        return x
    raise ValueError(f"sample point has shape {x.shape}; expected ({m},) or ({n_agents}, {m})")


def validate_assumptions(obj_list, samples, alpha_bound: float, step: float = FD_STEP) -> ValidationReport:
    """Check the standing assumptions on a list of local objectives.

    ``samples`` is a list of ``(x, t)``; ``x`` is either one point shared by
    every agent or an ``(N, m)`` array with one point per agent.

    A1 (identical invertible Hessians), A2 (bounded time-partial of the
    gradient) and A3 (exact parameterisation) are thresholded. A5 and A7
    only report magnitudes and fail only on non-finite values.
    """
    if not samples:
        raise ValueError("validate_assumptions needs at least one sample")
    dims = {o.dim for o in obj_list}
    if len(dims) != 1:
        raise ValueError(f"objectives disagree on dimension: {sorted(dims)}")
    m = dims.pop()
    n = len(obj_list)

    hess_gap = 0.0
    worst_cond = 0.0
    max_rate = 0.0
    decomp_gap = 0.0
    grad_spread = 0.0
    second_rate = 0.0
    hess_rate = 0.0
    for x, t in samples:
        pts = _agent_points(x, n, m)
        hs = [o.hessian(p, t) for o, p in zip(obj_list, pts)]
        grads = [o.grad(p, t) for o, p in zip(obj_list, pts)]
        for k in range(1, n):
            hess_gap = max(hess_gap, float(np.max(np.abs(hs[k] - hs[0]))))
        for o, p, hk in zip(obj_list, pts, hs):
            worst_cond = max(worst_cond, float(np.linalg.cond(hk)))
            rate = o.dgrad_dt(p, t)
            max_rate = max(max_rate, float(np.linalg.norm(rate)))
            omega, A = oracle_parameters(o)
            decomp_gap = max(
                decomp_gap,
                float(np.linalg.norm(hk - omega @ o.h_fn(p, t))),
                float(np.linalg.norm(rate - A @ o.g_fn(p, t))),
            )
            d2 = (o.dgrad_dt(p, t + step) - o.dgrad_dt(p, t - step)) / (2 * step)
            dh = (o.hessian(p, t + step) - o.hessian(p, t - step)) / (2 * step)
            second_rate = max(second_rate, float(np.linalg.norm(d2)))
            hess_rate = max(hess_rate, float(np.linalg.norm(dh)))
        for i in range(n):
            for j in range(i + 1, n):
                grad_spread = max(grad_spread, float(np.linalg.norm(grads[i] - grads[j])))

    a7 = max(second_rate, hess_rate)
    results = {
        "A1": AssumptionResult(
            "identical invertible Hessians",
            hess_gap <= 1e-9 and worst_cond < 1e12,
            hess_gap,
            f"max condition number {worst_cond:.3g}",
        ),
        "A2": AssumptionResult(
            "bounded time-partial of the gradient",
            max_rate < alpha_bound,
            max_rate,
            f"bound {alpha_bound:g}",
        ),
        "A3": AssumptionResult("parameterised Hessian and time-partial", decomp_gap < 1e-9, decomp_gap),
        "A5": AssumptionResult("bounded gradient disagreement", bool(np.isfinite(grad_spread)), grad_spread),
        "A7": AssumptionResult(
            "bounded second time-partial and Hessian rate",
            bool(np.isfinite(a7)),
            a7,
            f"d2/dt2 grad {second_rate:.3g}, dH/dt {hess_rate:.3g}",
        ),
    }
    return ValidationReport(results)
