"""Reference signals r(t) with analytic first and second derivatives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Harmonic:
    """r_k(t) = sin_k * sin(w_k t) + cos_k * cos(w_k t), componentwise."""

    sin: tuple[float, ...]
    cos: tuple[float, ...]
    frequency: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.sin) == len(self.cos) == len(self.frequency)):
            raise ValueError("harmonic trajectory: sin, cos and frequency must have equal length")
        # cached arrays; this sits on the hot path of every right-hand side
        object.__setattr__(self, "_w", np.asarray(self.frequency, dtype=float))
        object.__setattr__(self, "_a", np.asarray(self.sin, dtype=float))
        object.__setattr__(self, "_b", np.asarray(self.cos, dtype=float))
        object.__setattr__(self, "_last", (None, None, None))

    @property
    def dim(self) -> int:
        return len(self.sin)

    def _parts(self, t):
        # every agent asks for the same t within one right-hand-side call
        last_t, s, c = self._last
        if last_t != t:
            wt = self._w * t
            s, c = np.sin(wt), np.cos(wt)
            object.__setattr__(self, "_last", (t, s, c))
        return self._w, s, c, self._a, self._b

    def value(self, t: float) -> np.ndarray:
        _, s, c, a, b = self._parts(t)
        return a * s + b * c

    def rate(self, t: float) -> np.ndarray:
        w, s, c, a, b = self._parts(t)
        return w * (a * c - b * s)

    def accel(self, t: float) -> np.ndarray:
        w, s, c, a, b = self._parts(t)
        return -w * w * (a * s + b * c)

    def to_dict(self) -> dict:
        return {"kind": "harmonic", "sin": list(self.sin), "cos": list(self.cos), "frequency": list(self.frequency)}


@dataclass(frozen=True)
class Polynomial:
    """r_k(t) = sum_n coeffs[k][n] * t**n."""

    coeffs: tuple[tuple[float, ...], ...]

    @property
    def dim(self) -> int:
        return len(self.coeffs)

    def _eval(self, t, order):
        out = np.empty(self.dim)
        for k, c in enumerate(self.coeffs):
            poly = np.polynomial.Polynomial(c)
            out[k] = poly.deriv(order)(t) if order else poly(t)
        return out

    def value(self, t: float) -> np.ndarray:
        return self._eval(t, 0)

    def rate(self, t: float) -> np.ndarray:
        return self._eval(t, 1)

    def accel(self, t: float) -> np.ndarray:
        return self._eval(t, 2)

    def to_dict(self) -> dict:
        return {"kind": "polynomial", "coeffs": [list(c) for c in self.coeffs]}


def trajectory_from_dict(spec: dict):
    kind = spec.get("kind")
    if kind == "harmonic":
        n = len(spec.get("sin", spec.get("cos", [])))
        return Harmonic(
            sin=tuple(float(v) for v in spec.get("sin", [0.0] * n)),
            cos=tuple(float(v) for v in spec.get("cos", [0.0] * n)),
            frequency=tuple(float(v) for v in spec.get("frequency", [1.0] * n)),
        )
    if kind == "polynomial":
        return Polynomial(coeffs=tuple(tuple(float(c) for c in row) for row in spec["coeffs"]))
    if kind == "constant":
        return Polynomial(coeffs=tuple((float(v),) for v in spec["value"]))
    raise ValueError(f"unknown trajectory kind {kind!r}; expected harmonic, polynomial or constant")


def sin_cos() -> Harmonic:
    """r(t) = (sin t, cos t)."""
    return Harmonic(sin=(1.0, 0.0), cos=(0.0, 1.0), frequency=(1.0, 1.0))
