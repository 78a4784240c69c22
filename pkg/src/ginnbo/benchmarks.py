"""
Analytic test problems with exact gradients.

All problems are minimization problems. ``optimum_value`` is the global
minimum, ``optimum_point`` a minimizer (or None when not tabulated).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Problem:
    name: str
    dim: int
    bounds: np.ndarray
    evaluate: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    optimum_value: float | None = None
    optimum_point: np.ndarray | None = None
    noise_std: float = 0.0

    @property
    def lower(self):
        return self.bounds[:, 0]

    @property
    def upper(self):
        return self.bounds[:, 1]

    def contains(self, x, tol=1e-12):
        x = np.asarray(x, float)
        return x.shape == (self.dim,) and bool(
            np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol)
        )

    def sample_uniform(self, rng, n):
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    def with_noise(self, noise_std):
        return Problem(self.name, self.dim, self.bounds, self.evaluate, self.gradient,
                       self.optimum_value, self.optimum_point, float(noise_std))


def observe(problem, x, seed=None):
    """Value and gradient at ``x``, with i.i.d. Gaussian noise if configured."""
    x = np.asarray(x, dtype=np.float64)
    if not problem.contains(x):
        raise ValueError(f"{problem.name}: query {x} outside bounds")
    y = float(problem.evaluate(x))
    g = np.asarray(problem.gradient(x), dtype=np.float64).copy()
    if problem.noise_std > 0:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        eps = rng.normal(0.0, problem.noise_std, size=problem.dim + 1)
        y += eps[0]
        g += eps[1:]
    return y, g


# --------------------------------------------------------------------------


def _mccormick(x):
    x1, x2 = x
    return np.sin(x1 + x2) + (x1 - x2) ** 2 - 1.5 * x1 + 2.5 * x2 + 1.0


def _mccormick_grad(x):
    x1, x2 = x
    c = np.cos(x1 + x2)
    return np.array([c + 2.0 * (x1 - x2) - 1.5, c - 2.0 * (x1 - x2) + 2.5])


def _rosenbrock(x):
    x = np.asarray(x, float)
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def _rosenbrock_grad(x):
    x = np.asarray(x, float)
    g = np.zeros_like(x)
    t = x[1:] - x[:-1] ** 2
    g[:-1] += -400.0 * x[:-1] * t - 2.0 * (1.0 - x[:-1])
    g[1:] += 200.0 * t
    return g


HARTMANN6_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
HARTMANN6_A = np.array([
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
])
HARTMANN6_P = 1e-4 * np.array([
    [1312, 1696, 5569, 124, 8283, 5886],
    [2329, 4135, 8307, 3736, 1004, 9991],
    [2348, 1451, 3522, 2883, 3047, 6650],
    [4047, 8828, 8732, 5743, 1091, 381],
])


def _hartmann6(x):
    d = np.asarray(x, float) - HARTMANN6_P
    return float(-np.sum(HARTMANN6_ALPHA * np.exp(-np.sum(HARTMANN6_A * d * d, axis=1))))


def _hartmann6_grad(x):
    d = np.asarray(x, float) - HARTMANN6_P
    e = HARTMANN6_ALPHA * np.exp(-np.sum(HARTMANN6_A * d * d, axis=1))
    return 2.0 * (e[:, None] * HARTMANN6_A * d).sum(axis=0)


def _forrester(x):
    t = 6.0 * x[0] - 2.0
    return float(t * t * np.sin(12.0 * x[0] - 4.0))


def _forrester_grad(x):
    t = 6.0 * x[0] - 2.0
    s = 12.0 * x[0] - 4.0
    return np.array([12.0 * t * np.sin(s) + 12.0 * t * t * np.cos(s)])


def mccormick():
    return Problem(
        "mccormick", 2, np.array([[-1.5, 4.0], [-3.0, 4.0]]), _mccormick, _mccormick_grad,
        optimum_value=-1.9132229549810367,
        optimum_point=np.array([-0.5471975511965976, -1.5471975511965976]),
    )


def rosenbrock4():
    return Problem(
        "rosenbrock4", 4, np.tile([-2.048, 2.048], (4, 1)), _rosenbrock, _rosenbrock_grad,
        optimum_value=0.0, optimum_point=np.ones(4),
    )


def hartmann6():
    return Problem(
        "hartmann6", 6, np.tile([0.0, 1.0], (6, 1)), _hartmann6, _hartmann6_grad,
        optimum_value=-3.3223680114155147,
        optimum_point=np.array([0.20168951, 0.15001069, 0.47687398, 0.27533243, 0.31165162, 0.65730054]),
    )


def demo1d():
    """One-dimensional function with one local and one global minimum on [0, 1]."""
    return Problem(
        "demo1d", 1, np.array([[0.0, 1.0]]), _forrester, _forrester_grad,
        optimum_value=-6.020740055767083,
        optimum_point=np.array([0.757248757944784]),
    )


CATALOG = {
    "mccormick": mccormick,
    "rosenbrock4": rosenbrock4,
    "hartmann6": hartmann6,
    "demo1d": demo1d,
}


def get_problem(name):
    try:
        return CATALOG[name]()
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(CATALOG)}") from None
