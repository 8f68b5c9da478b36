"""Scenario configuration: YAML parsing, defaults, validation, dumping.

A config file is a YAML mapping. ``ScenarioConfig.to_dict`` returns the
normalized form with every default filled in and every gain expanded to
an explicit matrix; dumping that and loading it again gives an equal
config.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .graph import Topology, TopologyError, build_spectral, consensus_gain_condition, has_two_hop_cover
from .graph import is_connected, uncovered_pairs
from .integrate import IntegratorConfig
from .objective import (
    ObjectiveModel,
    build_power_supply,
    build_quadratic_tracking,
    build_source_seek_local,
    oracle_parameters,
    validate_assumptions,
)
from .plants import DoubleIntegrator, Vehicle
from .trajectories import trajectory_from_dict

CONTROLLERS = ("centralized_si", "nonadaptive_si", "centralized_di", "distributed_si", "distributed_di")
CENTRALIZED = ("centralized_si", "nonadaptive_si", "centralized_di")
SECOND_ORDER = ("centralized_di", "distributed_di")


class ConfigError(ValueError):
    """The file could not be parsed or has the wrong structure."""


class ValidationError(ValueError):
    """The scenario parses but violates a standing assumption or gain condition."""


@dataclass
class Gains:
    gamma1: np.ndarray
    gamma2: np.ndarray
    gamma3: np.ndarray
    gamma_theta: list[np.ndarray]
    gamma_omega: np.ndarray
    gamma_A: list[np.ndarray]
    k1: float
    k2: float
    alpha_est: float
    epsilon: float
    c: float
    baseline_k: float
    omega_model: np.ndarray | None
    A_model: np.ndarray | None


@dataclass
class ScenarioConfig:
    name: str
    controller: str
    dim: int
    objectives: list[ObjectiveModel]
    topology: Topology | None
    gains: Gains
    initial: dict[str, Any]
    integrator: IntegratorConfig
    plant: Any
    beta_bar: float
    clamp_beta: bool
    grad_noise: float
    seed: int
    alpha_bound: float
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def n_agents(self) -> int:
        return len(self.objectives)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)


# -- parsing helpers -----------------------------------------------------------


def _matrix(value, rows: int, cols: int, name: str) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        if rows != cols:
            raise ConfigError(f"{name}: scalar given for a non-square {rows}x{cols} matrix")
        return float(a) * np.eye(rows)
    if a.ndim == 1 and rows == cols and a.size == rows:
        return np.diag(a)
    try:
        return a.reshape(rows, cols)
    except ValueError:
        raise ConfigError(f"{name}: expected a {rows}x{cols} matrix, got shape {a.shape}") from None


def _vector(value, n: int, name: str) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        return np.full(n, float(a))
    if a.size != n:
        raise ConfigError(f"{name}: expected {n} entries, got {a.size}")
    return a.reshape(n)


def _per_agent(value, n: int, rows: int, cols: int, name: str) -> list[np.ndarray]:
    """One square gain shared by all agents, or a list with one per agent."""
    a = np.asarray(value, dtype=float)
    if a.ndim <= 2:
        shared = _matrix(a, rows, cols, name)
        return [shared.copy() for _ in range(n)]
    if a.shape[0] != n:
        raise ConfigError(f"{name}: expected one entry per agent ({n}), got {a.shape[0]}")
    return [_matrix(v, rows, cols, f"{name}[{i}]") for i, v in enumerate(a)]


def _check_pd(mat: np.ndarray, name: str) -> None:
    if not np.allclose(mat, mat.T, rtol=0, atol=1e-12) or np.linalg.eigvalsh(mat).min() <= 0:
        raise ValidationError(f"{name} must be symmetric positive definite")


def _tolist(a):
    return np.asarray(a, dtype=float).tolist()


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return section[key]


def _build_objective(spec: dict, m: int, where: str) -> tuple[ObjectiveModel, dict]:
    family = _require(spec, "family", where)
    traj_spec = _require(spec, "trajectory", where)
    try:
        traj = trajectory_from_dict(traj_spec)
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise ConfigError(f"{where}.trajectory: {exc}") from None
    if family == "quadratic_tracking":
        K = _matrix(spec.get("K", 1.0), m, m, f"{where}.K")
        gain = spec.get("gain")
        gain_m = None if gain is None else _matrix(gain, m, traj.dim, f"{where}.gain")
        try:
            obj = build_quadratic_tracking(m, K, traj.value, traj.rate, traj.accel, gain=gain_m)
        except ValueError as exc:
            raise ValidationError(f"{where}: {exc}") from None
        norm = {"family": family, "K": _tolist(K), "trajectory": traj.to_dict(),
                "gain": None if gain_m is None else _tolist(gain_m)}
        return obj, norm
    if family == "power_supply":
        if m != 1 or traj.dim != 2:
            raise ConfigError(f"{where}: power_supply needs dim 1 and a 2-component trajectory")
        k1, k2 = float(_require(spec, "k1", where)), float(_require(spec, "k2", where))
        obj = build_power_supply(k1, k2, traj.value, traj.rate, traj.accel)
        return obj, {"family": family, "k1": k1, "k2": k2, "trajectory": traj.to_dict()}
    if family == "source_seek_local":
        a = float(_require(spec, "a", where))
        b = _matrix(_require(spec, "b", where), m, traj.dim, f"{where}.b")
        anchors = np.asarray(spec.get("anchors", []), dtype=float).reshape(-1, m)
        weights = _vector(spec.get("weights", [0.0] * len(anchors)), len(anchors), f"{where}.weights")
        try:
            obj = build_source_seek_local(a, b, traj.value, traj.rate, list(zip(weights, anchors)), traj.accel)
        except ValueError as exc:
            raise ValidationError(f"{where}: {exc}") from None
        norm = {"family": family, "a": a, "b": _tolist(b), "trajectory": traj.to_dict(),
                "anchors": _tolist(anchors), "weights": _tolist(weights)}
        return obj, norm
    raise ConfigError(f"{where}: unknown objective family {family!r}")


def _build_topology(spec, where="topology") -> tuple[Topology, dict]:
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: expected a mapping with 'adjacency' or 'generator'")
    try:
        if "adjacency" in spec:
            topo = Topology(np.asarray(spec["adjacency"], dtype=float))
        elif "generator" in spec:
            topo = Topology.from_generator(spec["generator"], _require(spec, "size", where))
        else:
            raise ConfigError(f"{where}: give either 'adjacency' or 'generator' + 'size'")
    except TopologyError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return topo, {"adjacency": _tolist(topo.weights)}


# -- main entry points -----------------------------------------------------------


def from_dict(data: dict) -> ScenarioConfig:
    """Build and validate a scenario from a parsed mapping."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at top level")
    name = str(data.get("name", "scenario"))
    controller = _require(data, "controller", "config")
    if controller not in CONTROLLERS:
        raise ConfigError(f"unknown controller {controller!r}; expected one of {list(CONTROLLERS)}")
    m = int(_require(data, "dim", "config"))
    obj_specs = _require(data, "objectives", "config")
    if not isinstance(obj_specs, list) or not obj_specs:
        raise ConfigError("objectives: expected a nonempty list")
    built = [_build_objective(s, m, f"objectives[{i}]") for i, s in enumerate(obj_specs)]
    objectives = [b[0] for b in built]
    n = len(objectives)

    topology, topo_norm = None, None
    if controller in CENTRALIZED:
        if n != 1:
            raise ConfigError(f"{controller} takes exactly one objective, got {n}")
        if data.get("topology") is not None:
            raise ConfigError(f"{controller} does not use a topology")
    else:
        topology, topo_norm = _build_topology(_require(data, "topology", "config"))
        if topology.n_agents != n:
            raise ConfigError(f"topology has {topology.n_agents} agents but {n} objectives are given")

    g_in = data.get("gains") or {}
    validation = data.get("validation") or {}
    alpha_bound = float(validation.get("alpha_bound", 10.0))
    p_dims = [o.param_dim for o in objectives]
    gains = Gains(
        gamma1=_matrix(g_in.get("gamma1", 1.0), m, m, "gains.gamma1"),
        gamma2=_matrix(g_in.get("gamma2", 1.0), m, m, "gains.gamma2"),
        gamma3=_matrix(g_in.get("gamma3", 1.0), m, m, "gains.gamma3"),
        gamma_theta=_per_agent(g_in.get("gamma_theta", 1.0), n, m, m, "gains.gamma_theta"),
        gamma_omega=_matrix(g_in.get("gamma_omega", 1.0), m, m, "gains.gamma_omega"),
        gamma_A=_per_agent(g_in.get("gamma_A", 1.0), n, m, m, "gains.gamma_A"),
        k1=float(g_in.get("k1", 1.0)),
        k2=float(g_in.get("k2", 1.0)),
        alpha_est=float(g_in.get("alpha_est", 5.0 * alpha_bound)),
        epsilon=float(g_in.get("epsilon", 0.1)),
        c=float(g_in.get("c", 0.1)),
        baseline_k=float(g_in.get("baseline_k", 1.0)),
        omega_model=None,
        A_model=None,
    )
    if controller == "nonadaptive_si":
        gains.omega_model = _matrix(_require(g_in, "omega_model", "gains"), m, m, "gains.omega_model")
        gains.A_model = _matrix(_require(g_in, "A_model", "gains"), m, p_dims[0], "gains.A_model")
    for key in ("gamma1", "gamma2", "gamma3", "gamma_omega"):
        _check_pd(getattr(gains, key), f"gains.{key}")
    for i in range(n):
        _check_pd(gains.gamma_theta[i], f"gains.gamma_theta[{i}]")
        _check_pd(gains.gamma_A[i], f"gains.gamma_A[{i}]")
    for key in ("k1", "k2", "alpha_est", "epsilon", "c", "baseline_k"):
        if not getattr(gains, key) > 0:
            raise ValidationError(f"gains.{key} must be positive")

    init_in = data.get("initial") or {}
    try:
        x0 = np.asarray(_require(init_in, "x", "initial"), dtype=float).reshape(n, m)
    except ValueError:
        raise ConfigError(f"initial.x: expected {n} points of dimension {m}") from None
    initial = {
        "x": x0,
        "v": np.asarray(init_in.get("v", 0.0), dtype=float) * np.ones((n, m)),
        "eta1": _matrix(init_in.get("eta1", np.zeros((m, p_dims[0]))), m, p_dims[0], "initial.eta1"),
        "eta2": _matrix(init_in.get("eta2", np.zeros((m, m))), m, m, "initial.eta2"),
        "eta3": _matrix(init_in.get("eta3", np.zeros((m, p_dims[0]))), m, p_dims[0], "initial.eta3"),
        "sigma": np.asarray(init_in.get("sigma", 0.0), dtype=float) * np.ones((n, m)),
        "theta_hat": _per_agent_params(init_in.get("theta_hat", 0.0), m, p_dims, "initial.theta_hat"),
        "omega_hat": _per_agent(init_in.get("omega_hat", np.zeros((m, m))), n, m, m, "initial.omega_hat"),
        "A_hat": _per_agent_params(init_in.get("A_hat", 0.0), m, p_dims, "initial.A_hat"),
        "beta": np.asarray(init_in.get("beta", 0.0), dtype=float),
    }
    if initial["beta"].ndim not in (0, 2) or (initial["beta"].ndim == 2 and initial["beta"].shape != (n, n)):
        raise ConfigError(f"initial.beta: expected a scalar or an {n}x{n} matrix")

    p_in = data.get("plant") or {"kind": "double_integrator"}
    if p_in.get("kind", "double_integrator") == "double_integrator":
        plant, plant_norm = DoubleIntegrator(), {"kind": "double_integrator"}
    elif p_in["kind"] == "vehicle":
        if m != 2:
            raise ConfigError("plant.vehicle needs dim 2")
        mass = _vector(_require(p_in, "mass", "plant"), n, "plant.mass")
        friction = np.asarray(_require(p_in, "friction", "plant"), dtype=float).reshape(n, 2)
        if np.any(mass <= 0):
            raise ValidationError("plant.mass must be positive")
        plant = Vehicle(tuple(mass.tolist()), tuple(tuple(r) for r in friction.tolist()))
        plant_norm = {"kind": "vehicle", "mass": _tolist(mass), "friction": _tolist(friction)}
    else:
        raise ConfigError(f"plant: unknown kind {p_in.get('kind')!r}")
    if plant_norm["kind"] != "double_integrator" and controller not in SECOND_ORDER:
        raise ConfigError("vehicle plants need a double-integrator controller")

    i_in = data.get("integrator") or {}
    try:
        integrator = IntegratorConfig(
            method=str(i_in.get("method", "rk4")),
            step=float(i_in.get("step", 1e-3)),
            t_end=float(i_in.get("t_end", 20.0)),
            record_every=int(i_in.get("record_every", 10)),
        )
    except ValueError as exc:
        raise ConfigError(f"integrator: {exc}") from None

    options = data.get("options") or {}
    diagnostics = data.get("diagnostics") or {}
    output = data.get("output") or {}

    raw = {
        "name": name,
        "controller": controller,
        "dim": m,
        "topology": topo_norm,
        "objectives": [b[1] for b in built],
        "gains": {
            "gamma1": _tolist(gains.gamma1),
            "gamma2": _tolist(gains.gamma2),
            "gamma3": _tolist(gains.gamma3),
            "gamma_theta": [_tolist(gm) for gm in gains.gamma_theta],
            "gamma_omega": _tolist(gains.gamma_omega),
            "gamma_A": [_tolist(gm) for gm in gains.gamma_A],
            "k1": gains.k1,
            "k2": gains.k2,
            "alpha_est": gains.alpha_est,
            "epsilon": gains.epsilon,
            "c": gains.c,
            "baseline_k": gains.baseline_k,
            "omega_model": None if gains.omega_model is None else _tolist(gains.omega_model),
            "A_model": None if gains.A_model is None else _tolist(gains.A_model),
        },
        "initial": {
            "x": _tolist(initial["x"]),
            "v": _tolist(initial["v"]),
            "eta1": _tolist(initial["eta1"]),
            "eta2": _tolist(initial["eta2"]),
            "eta3": _tolist(initial["eta3"]),
            "sigma": _tolist(initial["sigma"]),
            "theta_hat": [_tolist(a) for a in initial["theta_hat"]],
            "omega_hat": [_tolist(a) for a in initial["omega_hat"]],
            "A_hat": [_tolist(a) for a in initial["A_hat"]],
            "beta": _tolist(initial["beta"]),
        },
        "plant": plant_norm,
        "integrator": {
            "method": integrator.method,
            "step": integrator.step,
            "t_end": integrator.t_end,
            "record_every": integrator.record_every,
        },
        "diagnostics": {"beta_bar": float(diagnostics.get("beta_bar", 1.0))},
        "validation": {
            "alpha_bound": alpha_bound,
            "samples": int(validation.get("samples", 100)),
            "seed": int(validation.get("seed", 0)),
        },
        "options": {
            "clamp_beta": bool(options.get("clamp_beta", False)),
            "grad_noise": float(options.get("grad_noise", 0.0)),
            "seed": int(options.get("seed", 0)),
        },
        "output": {"dir": output.get("dir"), "trace": str(output.get("trace", "trace.csv"))},
    }
    scenario = ScenarioConfig(
        name=name,
        controller=controller,
        dim=m,
        objectives=objectives,
        topology=topology,
        gains=gains,
        initial=initial,
        integrator=integrator,
        plant=plant,
        beta_bar=raw["diagnostics"]["beta_bar"],
        clamp_beta=raw["options"]["clamp_beta"],
        grad_noise=raw["options"]["grad_noise"],
        seed=raw["options"]["seed"],
        alpha_bound=alpha_bound,
        raw=raw,
    )
    validate_scenario(scenario)
    return scenario


def _per_agent_params(value, m, p_dims, name):
    """Per-agent m x p_i matrices; a scalar fills every entry."""
    if np.ndim(value) == 0:
        return [float(value) * np.ones((m, p)) for p in p_dims]
    if len(set(p_dims)) == 1 and np.ndim(value) == 2:
        return [_matrix(value, m, p_dims[0], name) for _ in p_dims]
    if len(value) != len(p_dims):
        raise ConfigError(f"{name}: expected one {m}xp matrix per agent ({len(p_dims)})")
    return [_matrix(v, m, p, f"{name}[{i}]") for i, (v, p) in enumerate(zip(value, p_dims))]


def assumption_samples(scenario: ScenarioConfig):
    """Deterministic (x, t) samples around the initial states over the horizon."""
    settings = scenario.raw["validation"]
    rng = np.random.default_rng(settings["seed"])
    x0 = scenario.initial["x"]
    lo = np.minimum(x0.min(axis=0), -1.0) - 1.0
    hi = np.maximum(x0.max(axis=0), 1.0) + 1.0
    n, m = x0.shape
    samples = []
    for _ in range(settings["samples"]):
        xs = rng.uniform(lo, hi, size=(n, m))
        t = float(rng.uniform(0.0, scenario.integrator.t_end))
        samples.append((xs, t))
    return samples


def validate_scenario(scenario: ScenarioConfig) -> None:
    """Raise :class:`ValidationError` naming the first violated condition."""
    kind = scenario.controller
    topo = scenario.topology
    if topo is not None:
        if not is_connected(topo):
            raise ValidationError("A4 violated: the communication graph must be undirected and connected")
        if kind == "distributed_di":
            if not has_two_hop_cover(topo):
                i, j = uncovered_pairs(topo)[0]
                raise ValidationError(
                    f"A6 violated: agents {i} and {j} are neither neighbours nor share a common neighbour"
                )
            lam2 = build_spectral(topo).lambda2
            k1, k2 = scenario.gains.k1, scenario.gains.k2
            if not consensus_gain_condition(k1, k2, lam2):
                raise ValidationError(
                    f"gain condition violated: k1/(2k2^2) = {k1 / (2 * k2 * k2):.4g} >= lambda2 = {lam2:.4g}; "
                    "double-integrator consensus requires k1/(2k2^2) < lambda2"
                )
            omegas = [oracle_parameters(o)[0] for o in scenario.objectives]
            if any(np.max(np.abs(om - omegas[0])) > 1e-9 for om in omegas):
                raise ValidationError("distributed double-integrator scheme requires identical Omega_i across agents")
    if kind == "distributed_si":
        total = scenario.initial["sigma"].sum(axis=0)
        if np.max(np.abs(total)) > 1e-12:
            raise ValidationError(f"estimator initial states must sum to zero, got {total.tolist()}")
    report = validate_assumptions(scenario.objectives, assumption_samples(scenario), scenario.alpha_bound)
    failed = report.failures()
    if failed:
        raise ValidationError("assumption check failed:\n" + str(report))


def parse_text(text: str, source: str = "<config>") -> dict:
    if not text.strip():
        raise ConfigError(f"{source}: empty config file")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark is not None else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{source}: parse error{where}: {problem}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    return data


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return from_dict(parse_text(text, str(path)))


def loads(text: str) -> ScenarioConfig:
    return from_dict(parse_text(text))

