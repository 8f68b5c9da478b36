"""Agent plants driven by the double-integrator controllers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def friction_profile(v) -> np.ndarray:
    """Quadratic drag direction, (-v1|v1|, -v2|v2|)."""
    v = np.asarray(v, dtype=float)
    return -v * np.abs(v)


def feedback_linearize_vehicle(u, v, mass: float, friction) -> np.ndarray:
    """Force that makes the vehicle behave like v' = u.

    The vehicle obeys ``mass * v' = tau + friction @ friction_profile(v)``;
    ``tau = mass * u - friction @ friction_profile(v)`` cancels the drag.
    """
    if mass <= 0:
        raise ValueError("vehicle mass must be positive")
    return mass * np.asarray(u, dtype=float) - np.asarray(friction) @ friction_profile(v)


def vehicle_acceleration(tau, v, mass: float, friction) -> np.ndarray:
    return (np.asarray(tau, dtype=float) + np.asarray(friction) @ friction_profile(v)) / mass


@dataclass(frozen=True)
class DoubleIntegrator:
    kind = "double_integrator"

    def acceleration(self, i: int, u, v):
        return u


@dataclass(frozen=True)
class Vehicle:
    """Per-agent masses and diagonal friction coefficients."""

    mass: tuple[float, ...]
    friction: tuple[tuple[float, ...], ...]
    kind = "vehicle"

    def acceleration(self, i: int, u, v):
        c = np.diag(self.friction[i])
        tau = feedback_linearize_vehicle(u, v, self.mass[i], c)
        return vehicle_acceleration(tau, v, self.mass[i], c)
