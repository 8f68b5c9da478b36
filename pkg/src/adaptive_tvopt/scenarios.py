"""Built-in scenario catalog.

One scenario per controller family plus the five-vehicle source-seeking
experiment. Each builder returns a plain config mapping so builtins go
through exactly the same parsing and validation as files on disk.
"""

from __future__ import annotations

import math

from .config import ScenarioConfig, from_dict

SIN = {"kind": "harmonic", "sin": [1.0], "cos": [0.0], "frequency": [1.0]}
SIN_COS = {"kind": "harmonic", "sin": [1.0, 0.0], "cos": [0.0, 1.0], "frequency": [1.0, 1.0]}

# source-seeking experiment constants
SOURCE_POWER = 0.9
SOURCE_GAIN = [[1.9, 0.0], [0.0, 2.1]]
ANCHORS = [[-6.0, 6.0], [6.0, 6.0], [6.0, -6.0], [-6.0, -6.0]]
ANCHOR_WEIGHTS = [
    [0.1, 0.1, 0.0, 0.0],
    [0.0, 0.1, 0.1, 0.0],
    [0.0, 0.0, 0.1, 0.1],
    [0.1, 0.0, 0.0, 0.1],
    [0.1, 0.0, 0.1, 0.0],
]
RING5 = [
    [0, 1, 0, 0, 1],
    [1, 0, 1, 0, 0],
    [0, 1, 0, 1, 0],
    [0, 0, 1, 0, 1],
    [1, 0, 0, 1, 0],
]
SOURCE_SEEK_X0 = [[4.0, 4.0], [-4.0, 4.0], [-4.0, -4.0], [4.0, -4.0], [1.0, 3.0]]
QUAD_DIST_SCALES = [0.6, 0.8, 1.0, 1.2, 1.4]


def _integrator(t_end=20.0, step=1e-3):
    return {"method": "rk4", "step": step, "t_end": t_end, "record_every": 10}


def quad_si_central() -> dict:
    """Scalar sinusoid tracking, f(x, t) = (x - sin t)^2, single integrator."""
    return {
        "name": "quad_si_central",
        "controller": "centralized_si",
        "dim": 1,
        "objectives": [{"family": "quadratic_tracking", "K": 1.0, "trajectory": SIN}],
        "gains": {"gamma1": 1.0},
        "initial": {"x": [[2.0]], "eta1": [[0.0]]},
        "integrator": _integrator(),
        "validation": {"alpha_bound": 3.0},
    }


def quad_si_baseline() -> dict:
    """Model-based law on the same objective, fed a 20% error in A."""
    return {
        "name": "quad_si_baseline",
        "controller": "nonadaptive_si",
        "dim": 1,
        "objectives": [{"family": "quadratic_tracking", "K": 1.0, "trajectory": SIN}],
        "gains": {"baseline_k": 1.0, "omega_model": [[2.0]], "A_model": [[-2.4]]},
        "initial": {"x": [[2.0]]},
        "integrator": _integrator(),
        "validation": {"alpha_bound": 3.0},
    }


def quad_si_dist() -> dict:
    """Five agents on a ring, f_i(x, t) = (x - c_i sin t)^2."""
    return {
        "name": "quad_si_dist",
        "controller": "distributed_si",
        "dim": 1,
        "topology": {"generator": "cycle", "size": 5},
        "objectives": [
            {"family": "quadratic_tracking", "K": 1.0, "trajectory": SIN, "gain": [[c]]} for c in QUAD_DIST_SCALES
        ],
        "gains": {"gamma_theta": 0.2, "epsilon": 0.1, "c": 0.1},
        "initial": {"x": [[2.0], [-1.0], [0.5], [-2.0], [1.0]], "sigma": 0.0, "beta": 10.0},
        "integrator": _integrator(),
        "validation": {"alpha_bound": 3.0},
    }


def quad_di_central() -> dict:
    """Scalar sinusoid tracking with double-integrator dynamics."""
    return {
        "name": "quad_di_central",
        "controller": "centralized_di",
        "dim": 1,
        "objectives": [{"family": "quadratic_tracking", "K": 1.0, "trajectory": SIN}],
        "gains": {"gamma1": 1.0, "gamma2": 1.0, "gamma3": 5.0},
        "initial": {"x": [[2.0]], "v": [[0.0]]},
        "integrator": _integrator(),
        "validation": {"alpha_bound": 3.0},
    }


def source_seek(plant: str = "vehicle") -> dict:
    """Five vehicles seeking a moving acoustic source with four anchors."""
    n = len(SOURCE_SEEK_X0)
    objectives = [
        {
            "family": "source_seek_local",
            "a": SOURCE_POWER,
            "b": SOURCE_GAIN,
            "trajectory": SIN_COS,
            "anchors": ANCHORS,
            "weights": ANCHOR_WEIGHTS[i],
        }
        for i in range(n)
    ]
    if plant == "vehicle":
        plant_spec = {
            "kind": "vehicle",
            "mass": [round(1.8 + 0.1 * i, 12) for i in range(1, n + 1)],
            "friction": [[round(0.5 + 0.1 * i, 12), round(0.6 + 0.2 * i, 12)] for i in range(1, n + 1)],
        }
    else:
        plant_spec = {"kind": "double_integrator"}
    return {
        "name": "source_seek",
        "controller": "distributed_di",
        "dim": 2,
        "topology": {"adjacency": RING5},
        "objectives": objectives,
        "gains": {
            "k1": 3.12,
            "k2": 1.1,
            "epsilon": 0.1,
            "c": 0.1,
            "gamma_theta": 0.8,
            "gamma_omega": 0.5,
            "gamma_A": 1.0,
        },
        "initial": {"x": SOURCE_SEEK_X0, "v": 0.0, "theta_hat": 0.0, "omega_hat": 0.0, "A_hat": 0.0, "beta": 0.0},
        "plant": plant_spec,
        "integrator": _integrator(),
        "validation": {"alpha_bound": 5.0},
    }


BUILTINS = {
    "quad_si_central": quad_si_central,
    "quad_si_baseline": quad_si_baseline,
    "quad_si_dist": quad_si_dist,
    "quad_di_central": quad_di_central,
    "source_seek": source_seek,
}


def builtin(name: str) -> ScenarioConfig:
    name = name.removeprefix("builtin:")
    try:
        return from_dict(BUILTINS[name]())
    except KeyError:
        raise KeyError(f"unknown builtin scenario {name!r}; available: {sorted(BUILTINS)}") from None


def builtin_source_seek() -> ScenarioConfig:
    return builtin("source_seek")


def source_seek_optimum(t: float) -> list[float]:
    """Closed-form optimum of the source-seeking experiment.

    x*(t) = [N (2/a) + 2 sum q]^-1 [N (2/a) b r(t) + 2 sum_ij q_ij R_j].
    """
    n = len(ANCHOR_WEIGHTS)
    q_total = sum(sum(row) for row in ANCHOR_WEIGHTS)
    denom = n * 2.0 / SOURCE_POWER + 2.0 * q_total
    r = (math.sin(t), math.cos(t))
    out = []
    for k in range(2):
        br = sum(SOURCE_GAIN[k][l] * r[l] for l in range(2))
        anchor = sum(ANCHOR_WEIGHTS[i][j] * ANCHORS[j][k] for i in range(n) for j in range(len(ANCHORS)))
        out.append((n * 2.0 / SOURCE_POWER * br + 2.0 * anchor) / denom)
    return out
