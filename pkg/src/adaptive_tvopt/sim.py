"""Closed-loop simulation of the adaptive tracking schemes.

A scenario is turned into a :class:`ClosedLoop`: a flat state vector, a
right-hand side that evaluates every agent's step function on one
shared snapshot, and a recorder producing :class:`TraceRecord` rows.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import controllers as ctl
from . import lyapunov as lyap
from .integrate import STEPPERS, IntegratorConfig
from .oracle import OracleSolution


class SimulationError(RuntimeError):
    def __init__(self, message, records=()):
        self.records = list(records)
        super().__init__(message)


@dataclass
class TraceRecord:
    t: float
    x: np.ndarray
    v: np.ndarray | None
    x_star: np.ndarray
    estimates: dict[str, np.ndarray]
    tracking_error: float
    consensus_error: float
    estimator_error: float = math.nan
    V: float = math.nan
    W: float = math.nan


class StateLayout:
    """Named blocks of a flat state vector."""

    def __init__(self):
        self._blocks: dict[str, tuple[slice, tuple[int, ...]]] = {}
        self.size = 0

    def add(self, name: str, shape) -> None:
        shape = tuple(int(s) for s in np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
        n = int(np.prod(shape)) if shape else 1
        self._blocks[name] = (slice(self.size, self.size + n), shape)
        self.size += n

    def get(self, y: np.ndarray, name: str) -> np.ndarray:
        sl, shape = self._blocks[name]
        return y[sl].reshape(shape)

    def put(self, y: np.ndarray, name: str, value) -> None:
        sl, _ = self._blocks[name]
        y[sl] = np.asarray(value, dtype=float).ravel()

    def names(self):
        return list(self._blocks)


# -- closed loops ---------------------------------------------------------------


class ClosedLoop:
    """Base: subclasses define the layout, ``rhs`` and ``snapshot``."""

    second_order = False
    kind = ""

    def __init__(self, scenario, agent_order=None):
        self.sc = scenario
        self.objectives = list(scenario.objectives)
        self.n = len(self.objectives)
        self.m = self.objectives[0].dim
        rng = np.random.default_rng(scenario.seed)
        self.views = [o.view(scenario.grad_noise, rng if scenario.grad_noise > 0 else None) for o in self.objectives]
        self.order = list(range(self.n)) if agent_order is None else list(agent_order)
        self.oracle = OracleSolution.for_objectives(self.objectives, np.mean(scenario.initial["x"], axis=0))
        self.layout = StateLayout()
        self.smoothing = ctl.SmoothingParams(scenario.gains.epsilon, scenario.gains.c, self.m)

    def prepare(self, t, y):
        return None

    def rhs(self, t, y, frozen):
        raise NotImplementedError

    def estimates(self, y) -> dict[str, np.ndarray]:
        skip = {"x", "v"}
        return {name: self.layout.get(y, name).copy() for name in self.layout.names() if name not in skip}

    def positions(self, y):
        return self.layout.get(y, "x").reshape(self.n, self.m)

    def velocities(self, y):
        return self.layout.get(y, "v").reshape(self.n, self.m) if self.second_order else None

    def lyapunov(self, t, y) -> dict[str, float]:
        return {}

    def extra_errors(self, t, y) -> dict[str, float]:
        return {}

    def record(self, t, y) -> TraceRecord:
        xs = self.positions(y).copy()
        vs = self.velocities(y)
        x_star = self.oracle.x_star(t)
        tracking = float(np.max(np.linalg.norm(xs - x_star, axis=1)))
        consensus = float(np.linalg.norm(lyap.consensus_projection(xs)))
        diag = self.lyapunov(t, y)
        return TraceRecord(
            t=t,
            x=xs,
            v=None if vs is None else vs.copy(),
            x_star=x_star,
            estimates=self.estimates(y),
            tracking_error=tracking,
            consensus_error=consensus,
            V=diag.get("V", math.nan),
            W=diag.get("W", math.nan),
            **self.extra_errors(t, y),
        )


class CentralizedSI(ClosedLoop):
    kind = "centralized_si"

    def __init__(self, scenario, agent_order=None):
        super().__init__(scenario, agent_order)
        p = self.objectives[0].param_dim
        self.layout.add("x", (1, self.m))
        self.layout.add("eta1", (self.m, p))
        self.y0 = np.zeros(self.layout.size)
        self.layout.put(self.y0, "x", scenario.initial["x"])
        self.layout.put(self.y0, "eta1", scenario.initial["eta1"])
        self.gamma1 = scenario.gains.gamma1

    def rhs(self, t, y, frozen):
        x = self.layout.get(y, "x")[0]
        st = ctl.CentralizedSIState(self.layout.get(y, "eta1"), self.gamma1)
        u, d_eta1 = ctl.centralized_si_step(x, t, self.views[0], st)
        dy = np.empty_like(y)
        self.layout.put(dy, "x", u)
        self.layout.put(dy, "eta1", d_eta1)
        return dy

    def lyapunov(self, t, y):
        x = self.layout.get(y, "x")[0]
        return {"V": lyap.v_centralized_si(self.objectives[0], x, t, self.layout.get(y, "eta1"), self.gamma1)}


class NonadaptiveSI(ClosedLoop):
    kind = "nonadaptive_si"

    def __init__(self, scenario, agent_order=None):
        super().__init__(scenario, agent_order)
        self.layout.add("x", (1, self.m))
        self.y0 = np.zeros(self.layout.size)
        self.layout.put(self.y0, "x", scenario.initial["x"])
        g = scenario.gains
        self.omega_model, self.A_model, self.k = g.omega_model, g.A_model, g.baseline_k

    def rhs(self, t, y, frozen):
        x = self.layout.get(y, "x")[0]
        return ctl.nonadaptive_si_step(x, t, self.views[0], self.omega_model, self.A_model, self.k)


class CentralizedDI(ClosedLoop):
    kind = "centralized_di"
    second_order = True

    def __init__(self, scenario, agent_order=None):
        super().__init__(scenario, agent_order)
        p = self.objectives[0].param_dim
        m = self.m
        for name, shape in (("x", (1, m)), ("v", (1, m)), ("eta1", (m, p)), ("eta2", (m, m)), ("eta3", (m, p))):
            self.layout.add(name, shape)
        self.y0 = np.zeros(self.layout.size)
        for name in ("x", "v", "eta1", "eta2", "eta3"):
            self.layout.put(self.y0, name, scenario.initial[name])
        g = scenario.gains
        self.gammas = (g.gamma1, g.gamma2, g.gamma3)
        self.plant = scenario.plant

    def _state(self, y):
        return ctl.CentralizedDIState(
            self.layout.get(y, "eta1"), self.layout.get(y, "eta2"), self.layout.get(y, "eta3"), *self.gammas
        )

    def rhs(self, t, y, frozen):
        x = self.layout.get(y, "x")[0]
        v = self.layout.get(y, "v")[0]
        rates = ctl.centralized_di_step(x, v, t, self.views[0], self._state(y))
        dy = np.empty_like(y)
        self.layout.put(dy, "x", v)
        self.layout.put(dy, "v", self.plant.acceleration(0, rates.u, v))
        self.layout.put(dy, "eta1", rates.d_eta1)
        self.layout.put(dy, "eta2", rates.d_eta2)
        self.layout.put(dy, "eta3", rates.d_eta3)
        return dy

    def lyapunov(self, t, y):
        x = self.layout.get(y, "x")[0]
        v = self.layout.get(y, "v")[0]
        st = self._state(y)
        value = lyap.v_centralized_di(
            self.objectives[0], x, v, t, st.eta1_hat, st.eta2_hat, st.eta3_hat, *self.gammas
        )
        return {"V": value}


class _Distributed(ClosedLoop):
    def __init__(self, scenario, agent_order=None):
        super().__init__(scenario, agent_order)
        self.topology = scenario.topology
        self.nbrs = [self.topology.neighbors(i) for i in range(self.n)]
        self.beta_bar = scenario.beta_bar
        self.clamp_beta = scenario.clamp_beta

    def _beta_dict(self, y, i):
        beta = self.layout.get(y, "beta")
        return {j: float(beta[i, j]) for j in self.nbrs[i]}

    def _put_beta_rates(self, dbeta, i, d_beta):
        for j, rate in d_beta.items():
            dbeta[i, j] = rate

    def _initial_beta(self, value):
        beta = np.zeros((self.n, self.n))
        value = np.asarray(value, dtype=float)
        for i in range(self.n):
            for j in self.nbrs[i]:
                beta[i, j] = value if value.ndim == 0 else value[i, j]
        return beta


class DistributedSI(_Distributed):
    kind = "distributed_si"

    def __init__(self, scenario, agent_order=None):
        super().__init__(scenario, agent_order)
        n, m = self.n, self.m
        self.layout.add("x", (n, m))
        self.layout.add("sigma", (n, m))
        self.layout.add("beta", (n, n))
        for i, o in enumerate(self.objectives):
            self.layout.add(f"theta_{i}", (m, o.param_dim))
        init = scenario.initial
        self.y0 = np.zeros(self.layout.size)
        self.layout.put(self.y0, "x", init["x"])
        self.layout.put(self.y0, "sigma", init["sigma"])
        self.layout.put(self.y0, "beta", self._initial_beta(init["beta"]))
        for i in range(n):
            self.layout.put(self.y0, f"theta_{i}", init["theta_hat"][i])
        g = scenario.gains
        self.gamma_theta = g.gamma_theta
        self._gamma_stack = np.array(g.gamma_theta)
        self.alpha_est = g.alpha_est

    def _grads(self, t, xs):
        return np.array([self.views[i].grad(xs[i], t) for i in range(self.n)])

    def _xis(self, t, y):
        return self.layout.get(y, "sigma") + self._grads(t, self.positions(y))

    def rhs(self, t, y, frozen):
        if len({o.param_dim for o in self.objectives}) > 1:
            return self._rhs_per_agent(t, y)
        xs = self.positions(y)
        grads = self._grads(t, xs)
        gs = np.array([v.g_fn(x, t) for v, x in zip(self.views, xs)])
        hinvs = np.array([ctl.checked_inverse(v.h_fn(x, t), t, x) for v, x in zip(self.views, xs)])
        thetas = np.array([self.layout.get(y, f"theta_{i}") for i in range(self.n)])
        u, dsigma, dbeta, dtheta = ctl.distributed_si_rates_all(
            xs, t, grads, gs, hinvs, self.layout.get(y, "sigma"), self.layout.get(y, "beta"), thetas,
            self._gamma_stack, self.topology.weights, self.smoothing, self.alpha_est, self.clamp_beta,
        )
        dy = np.zeros_like(y)
        self.layout.put(dy, "x", u)
        self.layout.put(dy, "sigma", dsigma)
        self.layout.put(dy, "beta", dbeta)
        for i in range(self.n):
            self.layout.put(dy, f"theta_{i}", dtheta[i])
        return dy

    def _rhs_per_agent(self, t, y):
        xs = self.positions(y)
        sigma = self.layout.get(y, "sigma")
        grads = self._grads(t, xs)
        xis = sigma + grads
        dy = np.zeros_like(y)
        dx = np.empty((self.n, self.m))
        dsigma = np.empty((self.n, self.m))
        dbeta = np.zeros((self.n, self.n))
        for i in self.order:
            st = ctl.DistributedSIAgentState(
                sigma[i], self._beta_dict(y, i), self.layout.get(y, f"theta_{i}"), self.gamma_theta[i], self.alpha_est
            )
            rates = ctl.distributed_si_step(
                xs[i],
                t,
                self.views[i],
                st,
                {j: xs[j] for j in self.nbrs[i]},
                {j: xis[j] for j in self.nbrs[i]},
                self.n,
                self.smoothing,
                self.clamp_beta,
                grads[i],
            )
            dx[i] = rates.u
            dsigma[i] = rates.d_sigma
            self._put_beta_rates(dbeta, i, rates.d_beta)
            self.layout.put(dy, f"theta_{i}", rates.d_theta)
        self.layout.put(dy, "x", dx)
        self.layout.put(dy, "sigma", dsigma)
        self.layout.put(dy, "beta", dbeta)
        return dy

    def extra_errors(self, t, y):
        xs = self.positions(y)
        zeta_n = sum(o.grad(x, t) for o, x in zip(self.objectives, xs))
        gap = self._xis(t, y) - zeta_n / self.n
        return {"estimator_error": float(np.max(np.linalg.norm(gap, axis=1)))}

    def lyapunov(self, t, y):
        xs = self.positions(y)
        thetas = [self.layout.get(y, f"theta_{i}") for i in range(self.n)]
        return {
            "V": lyap.v_distributed_si(self.objectives, xs, t, thetas, self.gamma_theta),
            "W": lyap.w_distributed_si(self.topology, xs, self.layout.get(y, "beta"), self.beta_bar),
        }


class DistributedDI(_Distributed):
    """Aggregates are exchanged once per step from the step-start snapshot."""

    kind = "distributed_di"
    second_order = True

    def __init__(self, scenario, agent_order=None):
        super().__init__(scenario, agent_order)
        n, m = self.n, self.m
        self.layout.add("x", (n, m))
        self.layout.add("v", (n, m))
        self.layout.add("beta", (n, n))
        for i, o in enumerate(self.objectives):
            self.layout.add(f"theta_{i}", (m, o.param_dim))
            self.layout.add(f"omega_{i}", (m, m))
            self.layout.add(f"A_{i}", (m, o.param_dim))
        init = scenario.initial
        self.y0 = np.zeros(self.layout.size)
        self.layout.put(self.y0, "x", init["x"])
        self.layout.put(self.y0, "v", init["v"])
        self.layout.put(self.y0, "beta", self._initial_beta(init["beta"]))
        for i in range(n):
            self.layout.put(self.y0, f"theta_{i}", init["theta_hat"][i])
            self.layout.put(self.y0, f"omega_{i}", init["omega_hat"][i])
            self.layout.put(self.y0, f"A_{i}", init["A_hat"][i])
        g = scenario.gains
        self.gamma_theta, self.gamma_omega, self.gamma_A = g.gamma_theta, g.gamma_omega, g.gamma_A
        self._gamma_theta_stack, self._gamma_A_stack = np.array(g.gamma_theta), np.array(g.gamma_A)
        self.k1, self.k2 = g.k1, g.k2
        self.plant = scenario.plant
        w = self.topology.weights
        self.edge_weights = [{j: float(w[i, j]) for j in self.nbrs[i]} for i in range(n)]

    def prepare(self, t, y):
        xs = self.positions(y)
        vs = self.velocities(y)
        terms = [
            ctl.aggregate_terms(xs[i], vs[i], t, self.views[i], self.layout.get(y, f"theta_{i}"))
            for i in range(self.n)
        ]
        sums = [ctl.distributed_summation(np.array([tm[k] for tm in terms]), self.topology) for k in range(3)]
        return [ctl.GlobalAggregates(sums[0][i], sums[1][i], sums[2][i]) for i in range(self.n)]

    def rhs(self, t, y, frozen):
        if len({o.param_dim for o in self.objectives}) > 1:
            return self._rhs_per_agent(t, y, frozen)
        xs = self.positions(y)
        vs = self.velocities(y)
        get = self.layout.get
        local = [[] for _ in range(6)]
        for view, x, v in zip(self.views, xs, vs):
            h = view.h_fn(x, t)
            values = (view.grad(x, t), h, view.g_fn(x, t), ctl.checked_inverse(h, t, x),
                      view.h_total_deriv(x, v, t), view.g_total_deriv(x, v, t))
            for bucket, value in zip(local, values):
                bucket.append(value)
        estimates = tuple(np.array([get(y, f"{key}_{i}") for i in range(self.n)]) for key in ("theta", "omega", "A"))
        aggregates = np.array([[a.zeta_n, a.sum_hv, a.zeta_g] for a in frozen])
        u, dbeta, dtheta, domega, dA = ctl.distributed_di_rates_all(
            xs, vs, t, tuple(np.array(b) for b in local), estimates,
            (self._gamma_theta_stack, self.gamma_omega, self._gamma_A_stack, self.k1, self.k2),
            aggregates, self.topology.weights, get(y, "beta"), self.smoothing, self.clamp_beta,
        )
        dy = np.zeros_like(y)
        dv = np.array([self.plant.acceleration(i, u[i], vs[i]) for i in range(self.n)])
        for i in range(self.n):
            self.layout.put(dy, f"theta_{i}", dtheta[i])
            self.layout.put(dy, f"omega_{i}", domega[i])
            self.layout.put(dy, f"A_{i}", dA[i])
        self.layout.put(dy, "x", vs)
        self.layout.put(dy, "v", dv)
        self.layout.put(dy, "beta", dbeta)
        return dy

    def _rhs_per_agent(self, t, y, frozen):
        xs = self.positions(y)
        vs = self.velocities(y)
        dy = np.zeros_like(y)
        dv = np.empty((self.n, self.m))
        dbeta = np.zeros((self.n, self.n))
        for i in self.order:
            st = ctl.DistributedDIAgentState(
                self._beta_dict(y, i),
                self.layout.get(y, f"theta_{i}"),
                self.layout.get(y, f"omega_{i}"),
                self.layout.get(y, f"A_{i}"),
                self.gamma_theta[i],
                self.gamma_omega,
                self.gamma_A[i],
                self.k1,
                self.k2,
            )
            rates = ctl.distributed_di_step(
                xs[i],
                vs[i],
                t,
                self.views[i],
                st,
                {j: xs[j] for j in self.nbrs[i]},
                {j: vs[j] for j in self.nbrs[i]},
                frozen[i],
                self.n,
                self.smoothing,
                self.edge_weights[i],
                self.clamp_beta,
            )
            dv[i] = self.plant.acceleration(i, rates.u, vs[i])
            self._put_beta_rates(dbeta, i, rates.d_beta)
            self.layout.put(dy, f"theta_{i}", rates.d_theta)
            self.layout.put(dy, f"omega_{i}", rates.d_omega)
            self.layout.put(dy, f"A_{i}", rates.d_A)
        self.layout.put(dy, "x", vs)
        self.layout.put(dy, "v", dv)
        self.layout.put(dy, "beta", dbeta)
        return dy

    def lyapunov(self, t, y):
        xs = self.positions(y)
        vs = self.velocities(y)
        get = self.layout.get
        v_value = lyap.v_distributed_di(
            self.objectives,
            xs,
            vs,
            t,
            [get(y, f"theta_{i}") for i in range(self.n)],
            [get(y, f"omega_{i}") for i in range(self.n)],
            [get(y, f"A_{i}") for i in range(self.n)],
            self.gamma_theta,
            self.gamma_omega,
            self.gamma_A,
        )
        w_value = lyap.w_distributed_di(self.topology, xs, vs, get(y, "beta"), self.beta_bar, self.k1, self.k2)
        return {"V": v_value, "W": w_value}


CLOSED_LOOPS = {
    cls.kind: cls for cls in (CentralizedSI, NonadaptiveSI, CentralizedDI, DistributedSI, DistributedDI)
}


def build_closed_loop(scenario, agent_order=None) -> ClosedLoop:
    try:
        cls = CLOSED_LOOPS[scenario.controller]
    except KeyError:
        raise ValueError(f"unknown controller kind {scenario.controller!r}") from None
    return cls(scenario, agent_order)


def run_closed_loop(loop: ClosedLoop, integrator: IntegratorConfig, on_step=None) -> list[TraceRecord]:
    """Integrate a closed loop and return the recorded trace."""
    # blow-ups are reported as SimulationError with context, not numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        return _run(loop, integrator, on_step)


def _run(loop, integrator, on_step):
    stepper = STEPPERS[integrator.method]
    h = integrator.step
    y = loop.y0.copy()
    records: list[TraceRecord] = [loop.record(0.0, y)]
    recent: deque[TraceRecord] = deque(records, maxlen=100)
    for k in range(integrator.n_steps):
        t = k * h
        try:
            frozen = loop.prepare(t, y)
            y = stepper(loop.rhs, t, y, h, frozen)
        except ctl.SingularFactorError as exc:
            raise SimulationError(f"controller failure at t={t:.6g}: {exc}", recent) from exc
        if not np.all(np.isfinite(y)):
            bad = [name for name in loop.layout.names() if not np.all(np.isfinite(loop.layout.get(y, name)))]
            raise SimulationError(
                f"non-finite state at t={(k + 1) * h:.6g} in blocks {bad}; last record t={recent[-1].t:.6g}",
                recent,
            )
        if on_step is not None:
            on_step((k + 1) * h, y)
        if (k + 1) % integrator.record_every == 0 or k + 1 == integrator.n_steps:
            rec = loop.record((k + 1) * h, y)
            records.append(rec)
            recent.append(rec)
    return records


def simulate(scenario, agent_order=None, on_step=None) -> list[TraceRecord]:
    """Run a validated scenario and return its trace."""
    loop = build_closed_loop(scenario, agent_order)
    return run_closed_loop(loop, scenario.integrator, on_step)


# -- metrics -------------------------------------------------------------------


@dataclass
class TraceMetrics:
    max_tracking_error: float
    max_consensus_error: float
    v_violations: int
    settle_time: float
    max_speed: float = math.nan
    max_spread: float = math.nan
    extra: dict = field(default_factory=dict)


def metrics(trace, window, tolerance: float = 1e-2, v_tolerance: float = 1e-6) -> TraceMetrics:
    """Aggregate error statistics over ``window = (t_a, t_b)``.

    ``settle_time`` is the earliest recorded time after which the
    tracking error stays below ``tolerance`` for the rest of the trace
    (inf if it never does). ``v_violations`` counts consecutive records in
    the window where V rises by more than ``v_tolerance``.
    """
    t_a, t_b = window
    if not t_a < t_b:
        raise ValueError("metrics window must satisfy t_a < t_b")
    eps = 1e-12
    sel = [r for r in trace if t_a - eps <= r.t <= t_b + eps]
    if not sel:
        raise ValueError(f"no records in window [{t_a}, {t_b}]")
    violations = 0
    for prev, cur in zip(sel, sel[1:]):
        if np.isfinite(prev.V) and np.isfinite(cur.V) and cur.V - prev.V > v_tolerance:
            violations += 1
    settle = math.inf
    for r in reversed(trace):
        if r.tracking_error > tolerance:
            break
        settle = r.t
    speeds = [float(np.max(np.linalg.norm(r.v, axis=1))) for r in sel if r.v is not None]
    spreads = []
    for r in sel:
        d = r.x[:, None, :] - r.x[None, :, :]
        spreads.append(float(np.max(np.linalg.norm(d, axis=2))))
    return TraceMetrics(
        max_tracking_error=max(r.tracking_error for r in sel),
        max_consensus_error=max(r.consensus_error for r in sel),
        v_violations=violations,
        settle_time=settle,
        max_speed=max(speeds) if speeds else math.nan,
        max_spread=max(spreads),
    )
