"""Reference optimum x*(t) of the summed objective."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class OracleError(RuntimeError):
    def __init__(self, message, residuals=()):
        self.residuals = list(residuals)
        super().__init__(message)


def _summed(objectives, x, t):
    grad = sum(o.grad(x, t) for o in objectives)
    hess = sum(o.hessian(x, t) for o in objectives)
    return grad, hess


def newton_solve(objectives, t: float, x0, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Damped Newton on sum_i grad f_i(x, t) = 0."""
    x = np.array(x0, dtype=float)
    grad, hess = _summed(objectives, x, t)
    history = [float(np.linalg.norm(grad))]
    for _ in range(max_iter):
        if history[-1] <= tol:
            return x
        step = np.linalg.solve(hess, grad)
        total = sum(o.eval(x, t) for o in objectives)
        lam = 1.0
        while lam > 1e-8:
            cand = x - lam * step
            if sum(o.eval(cand, t) for o in objectives) <= total:
                break
            lam *= 0.5
        x = x - lam * step
        grad, hess = _summed(objectives, x, t)
        history.append(float(np.linalg.norm(grad)))
    if history[-1] <= tol:
        return x
    raise OracleError(f"Newton did not converge at t={t:g}: residual {history[-1]:.3e}", history)


def oracle_solve(objectives, t: float, x_init_guess=None) -> np.ndarray:
    """Minimiser of sum_i f_i(., t).

    Quadratic families are solved in closed form,
    x* = -(sum H_i)^-1 sum_i grad f_i(0, t); anything else goes through
    damped Newton from ``x_init_guess``.
    """
    m = objectives[0].dim
    if all(o.quadratic for o in objectives):
        zero = np.zeros(m)
        grad0, hess = _summed(objectives, zero, t)
        return -np.linalg.solve(hess, grad0)
    x0 = np.zeros(m) if x_init_guess is None else x_init_guess
    return newton_solve(objectives, t, x0)


def optimal_rate(objectives, x_star, t: float) -> np.ndarray:
    """dx*/dt = -(sum H_i)^-1 sum_i d/dt grad f_i at the optimum."""
    rate = sum(o.dgrad_dt(x_star, t) for o in objectives)
    hess = sum(o.hessian(x_star, t) for o in objectives)
    return -np.linalg.solve(hess, rate)


@dataclass
class OracleSolution:
    objectives: list
    mode: str = "closed_form"
    x0: np.ndarray | None = None
    _last: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def for_objectives(cls, objectives, x0=None) -> "OracleSolution":
        mode = "closed_form" if all(o.quadratic for o in objectives) else "newton_continuation"
        return cls(list(objectives), mode, None if x0 is None else np.asarray(x0, float))

    def x_star(self, t: float) -> np.ndarray:
        if self.mode == "closed_form":
            return oracle_solve(self.objectives, t)
        guess = self._last if self._last is not None else self.x0
        self._last = oracle_solve(self.objectives, t, guess)
        return self._last

    def v_star_opt(self, t: float) -> np.ndarray:
        return optimal_rate(self.objectives, self.x_star(t), t)

    def residual(self, t: float) -> float:
        x = self.x_star(t)
        return float(np.linalg.norm(sum(o.grad(x, t) for o in self.objectives)))
