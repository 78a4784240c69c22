"""
Acquisition functions over a posterior ensemble and their optimizer.

Both functions are written for minimization of the objective: LCB is
minimized directly, LogEI is maximized (its negative is minimized). The
improvement is measured below the incumbent, ``z = (y* - mu) / sigma``.

Surrogates are duck-typed: anything with
``moments_with_input_gradient(x) -> (mu, sigma, dmu, dsigma)`` for a batch
of inputs ``x`` (n, D) can be used.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as _opt
from scipy import special

log = logging.getLogger(__name__)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_HALF_LOG_PI_2 = 0.5 * math.log(math.pi / 2.0)
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_EPS = 1.0 / math.sqrt(np.finfo(float).eps)


@dataclass(frozen=True)
class AcquisitionSpec:
    kind: str = "LCB"
    beta: float = 2.0
    incumbent: float | None = None

    def __post_init__(self):
        kind = self.kind.upper() if self.kind.lower() != "logei" else "LogEI"
        object.__setattr__(self, "kind", kind)
        if kind not in ("LCB", "LogEI"):
            raise ValueError(f"unknown acquisition {self.kind!r}")
        if kind == "LCB" and not self.beta > 0:
            raise ValueError("LCB needs beta > 0")
        if kind == "LogEI" and self.incumbent is not None and not math.isfinite(self.incumbent):
            raise ValueError("LogEI needs a finite incumbent")


@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 10
    max_iterations: int = 100
    gradient_tolerance: float = 1e-6
    bounds: np.ndarray | None = None

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.bounds is not None:
            b = np.asarray(self.bounds, float)
            if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 0] > b[:, 1]):
                raise ValueError("bounds must be an (D, 2) array with lo <= hi")


# --------------------------------------------------------------------------
# log h(z), h(z) = phi(z) + z Phi(z)


def _log1mexp(a):
    """log(1 - exp(a)) for a < 0."""
    a = np.asarray(a, float)
    return np.where(a > -math.log(2.0), np.log(-np.expm1(a)), np.log1p(-np.exp(a)))


def log_h(z):
    """``log(phi(z) + z Phi(z))``, finite for every finite ``z``."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    upper = z > -1.0
    zu = z[upper]
    out[upper] = np.log(np.exp(-0.5 * zu * zu - _LOG_SQRT_2PI) + zu * special.ndtr(zu))
    mid = ~upper & (z > -_INV_SQRT_EPS)
    zm = z[mid]
    out[mid] = (-0.5 * zm * zm - _LOG_SQRT_2PI
                + _log1mexp(np.log(special.erfcx(-zm / _SQRT2) * np.abs(zm)) + _HALF_LOG_PI_2))
    low = ~upper & ~mid
    zl = z[low]
    out[low] = -0.5 * zl * zl - _LOG_SQRT_2PI - 2.0 * np.log(np.abs(zl))
    return out


def dlog_h(z):
    """Derivative of :func:`log_h`, which is ``Phi(z) / h(z)``."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    upper = z > -1.0
    zu = z[upper]
    cdf = special.ndtr(zu)
    out[upper] = cdf / (np.exp(-0.5 * zu * zu - _LOG_SQRT_2PI) + zu * cdf)
    zl = z[~upper]
    # Phi/phi through erfcx keeps the ratio representable for very negative z
    r = math.sqrt(math.pi / 2.0) * special.erfcx(-zl / _SQRT2)
    out[~upper] = r / (1.0 + zl * r)
    return out


# --------------------------------------------------------------------------


def _moments(surrogate, x):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return surrogate.moments_with_input_gradient(x)


def lcb(ensemble, x, beta=2.0):
    """``mu(x) - beta * sigma(x)`` at a single point."""
    mu, sigma, _, _ = _moments(ensemble, x)
    return float(mu[0] - beta * sigma[0])


def lcb_and_grad(ensemble, x, beta=2.0):
    mu, sigma, dmu, dsigma = _moments(ensemble, x)
    return mu - beta * sigma, dmu - beta * dsigma


def log_ei(ensemble, x, incumbent):
    """``log h(z) + log sigma(x)`` with ``z = (incumbent - mu) / sigma``."""
    mu, sigma, _, _ = _moments(ensemble, x)
    z = (incumbent - mu) / sigma
    return float(log_h(z)[0] + np.log(sigma[0]))


def log_ei_and_grad(ensemble, x, incumbent):
    mu, sigma, dmu, dsigma = _moments(ensemble, x)
    z = (incumbent - mu) / sigma
    dz = -(dmu + z[:, None] * dsigma) / sigma[:, None]
    val = log_h(z) + np.log(sigma)
    return val, dlog_h(z)[:, None] * dz + dsigma / sigma[:, None]


def objective(ensemble, spec):
    """Scalar function to minimize, returning ``(value, gradient)`` at x (D,)."""
    if spec.kind == "LCB":
        def fn(x):
            v, g = lcb_and_grad(ensemble, x, spec.beta)
            return float(v[0]), g[0]
    else:
        if spec.incumbent is None:
            raise ValueError("LogEI needs an incumbent")

        def fn(x):
            v, g = log_ei_and_grad(ensemble, x, spec.incumbent)
            return -float(v[0]), -g[0]
    return fn


def batch_objective(ensemble, spec, X):
    X = np.atleast_2d(X)
    if spec.kind == "LCB":
        return lcb_and_grad(ensemble, X, spec.beta)[0]
    return -log_ei_and_grad(ensemble, X, spec.incumbent)[0]


@dataclass
class AcquisitionResult:
    x: np.ndarray
    value: float
    restart_points: np.ndarray = field(repr=False)
    restart_values: np.ndarray = field(repr=False)
    fallback: bool = False


def optimize(ensemble, spec, config, seed):
    """Multi-start L-BFGS-B on the acquisition objective.

    Starts are uniform in the box. Returns the best finite end point,
    clipped to the bounds. If no restart produces a finite value the best
    of a 1024-point uniform scan is returned instead.
    """
    if config.bounds is None:
        raise ValueError("optimizer config needs bounds")
    bounds = np.asarray(config.bounds, float)
    rng = np.random.default_rng(seed)
    starts = rng.uniform(bounds[:, 0], bounds[:, 1], size=(config.restarts, bounds.shape[0]))
    fn = objective(ensemble, spec)
    xs, vals = [], []
    for x0 in starts:
        try:
            res = _opt.minimize(
                fn, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                options={"maxiter": config.max_iterations, "gtol": config.gradient_tolerance},
            )
            x = np.clip(res.x, bounds[:, 0], bounds[:, 1])
            v = fn(x)[0]
        except (FloatingPointError, ValueError):
            x, v = x0, math.nan
        xs.append(x)
        vals.append(v if math.isfinite(v) else math.nan)
    vals = np.array(vals)
    xs = np.array(xs)
    if np.all(np.isnan(vals)):
        log.warning("all acquisition restarts failed; using a random scan")
        scan = rng.uniform(bounds[:, 0], bounds[:, 1], size=(1024, bounds.shape[0]))
        sv = batch_objective(ensemble, spec, scan)
        sv = np.where(np.isfinite(sv), sv, np.inf)
        k = int(np.argmin(sv))
        return AcquisitionResult(scan[k], float(sv[k]), xs, vals, fallback=True)
    k = int(np.nanargmin(vals))
    return AcquisitionResult(xs[k].copy(), float(vals[k]), xs, vals)
