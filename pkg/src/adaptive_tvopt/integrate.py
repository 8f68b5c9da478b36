"""Fixed-step explicit integrators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    step: float = 1e-3
    t_end: float = 20.0
    record_every: int = 10

    def __post_init__(self):
        if self.method not in STEPPERS:
            raise ValueError(f"unknown integrator {self.method!r}; expected one of {sorted(STEPPERS)}")
        if not self.step > 0:
            raise ValueError("integrator step must be positive")
        if not self.t_end >= self.step:
            raise ValueError("t_end must be at least one step")
        if self.record_every < 1:
            raise ValueError("record_every must be a positive integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.step))


def euler_step(f, t, y, h, frozen=None):
    return y + h * f(t, y, frozen)


def rk4_step(f, t, y, h, frozen=None):
    k1 = f(t, y, frozen)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1, frozen)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2, frozen)
    k4 = f(t + h, y + h * k3, frozen)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


STEPPERS = {"rk4": rk4_step, "explicit-euler": euler_step}


def integrate(f, y0, config: IntegratorConfig, t0: float = 0.0):
    """Plain fixed-step integration of y' = f(t, y); returns (times, states)."""
    step = STEPPERS[config.method]

    def rhs(t, y, _frozen):
        return f(t, y)

    y = np.array(y0, dtype=float)
    times = [t0]
    states = [y.copy()]
    for k in range(config.n_steps):
        t = t0 + k * config.step
        y = step(rhs, t, y, config.step)
        times.append(t0 + (k + 1) * config.step)
        states.append(y.copy())
    return np.array(times), np.array(states)
