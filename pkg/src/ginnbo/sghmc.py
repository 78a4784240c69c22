"""
Scale-adapted stochastic-gradient Hamiltonian Monte Carlo.

Update per step (all matrices diagonal)::

    theta <- theta + v
    v     <- v - delta^2 V^-1/2 grad U~(theta)
               - delta V^-1/2 C v
               + N(0, 2 delta^3 V^-1/2 C V^-1/2 - delta^4)

``V`` is an estimate of the elementwise second moment of the stochastic
gradient, adapted by an exponential moving average during burn-in and then
frozen. ``C`` is either ``c * I`` for a user-supplied ``c`` or, by default,
the scale-adapted choice ``C = mdecay * V^1/2 / delta`` which makes the
per-step friction ``delta V^-1/2 C`` equal to ``mdecay``.

Random numbers come from ``numpy.random.Generator(PCG64(seed))``, which is
reproducible across platforms.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import bnn

log = logging.getLogger(__name__)

V_HAT_FLOOR = 1e-16


class DivergenceError(RuntimeError):
    """Raised when the sampler produces a non-finite gradient or state."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class SghmcConfig:
    total_steps: int = 6000
    burn_in_steps: int = 2000
    learning_rate: float = 1e-4
    step_size: float | None = None
    mdecay: float = 0.05
    friction: float | None = None
    sampling_interval: int = 80
    batch_size: int = 32
    ema_decay: float | None = None

    def __post_init__(self):
        if not 0 <= self.burn_in_steps < self.total_steps:
            raise ValueError("need 0 <= burn_in_steps < total_steps")
        if self.sampling_interval < 1:
            raise ValueError("sampling_interval must be >= 1")
        if self.n_samples < 1:
            raise ValueError("configuration keeps no samples")
        if self.step_size is not None and self.step_size < 0:
            raise ValueError("step_size must be nonnegative")
        if self.friction is not None and self.friction < 0:
            raise ValueError("friction must be nonnegative")
        if self.learning_rate <= 0 or self.mdecay < 0 or self.batch_size < 1:
            raise ValueError("invalid learning_rate, mdecay or batch_size")
        if self.ema_decay is not None and not 0 <= self.ema_decay < 1:
            raise ValueError("ema_decay must lie in [0, 1)")

    @property
    def n_samples(self):
        return (self.total_steps - self.burn_in_steps) // self.sampling_interval

    def delta(self, n_data):
        """Step size; defaults to ``sqrt(learning_rate / N)``."""
        if self.step_size is not None:
            return self.step_size
        return math.sqrt(self.learning_rate / max(n_data, 1))

    def decay(self):
        """EMA factor for V; by default the horizon equals the burn-in length."""
        if self.ema_decay is not None:
            return self.ema_decay
        return 1.0 - 1.0 / max(self.burn_in_steps, 1)


@dataclass
class SamplerState:
    theta: np.ndarray
    v: np.ndarray
    v_hat: np.ndarray
    step_count: int = 0
    grad_sq_ema: np.ndarray | None = None
    ema_weight: float = 0.0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0), repr=False)
    floor_events: int = 0

    @classmethod
    def initial(cls, theta, seed_or_rng):
        rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)
        theta = np.array(theta, dtype=np.float64)
        return cls(theta, np.zeros_like(theta), np.ones_like(theta), 0, None, 0.0, rng)

    def copy(self):
        rng = np.random.Generator(np.random.PCG64())
        rng.bit_generator.state = self.rng.bit_generator.state
        return replace(self, theta=self.theta.copy(), v=self.v.copy(), v_hat=self.v_hat.copy(),
                       grad_sq_ema=None if self.grad_sq_ema is None else self.grad_sq_ema.copy(), rng=rng)


@dataclass
class StepInfo:
    potential: float
    grad_norm: float
    floored_fraction: float


def step(state, config, grad_fn, n_data, burn_in=None):
    """Advance ``state`` by one SGHMC step in place and return it.

    ``grad_fn(theta) -> (U, grad U)`` evaluates the stochastic potential on
    the current mini-batch. ``burn_in`` overrides whether V is adapted; by
    default it is while ``step_count < burn_in_steps``.
    """
    delta = config.delta(n_data)
    state.theta += state.v
    u, g = grad_fn(state.theta)
    if not (np.isfinite(u) and np.all(np.isfinite(g))):
        raise DivergenceError(
            f"non-finite potential gradient at step {state.step_count}; step size too large?",
            step=state.step_count,
        )
    adapting = state.step_count < config.burn_in_steps if burn_in is None else burn_in
    if adapting:
        a = config.decay()
        if state.grad_sq_ema is None or state.ema_weight == 0.0:
            # the initial v_hat counts as one observation, which keeps the
            # preconditioner bounded where the gradient is exactly zero
            state.grad_sq_ema = (1.0 - a) * state.v_hat
            state.ema_weight = 1.0 - a
        state.ema_weight = a * state.ema_weight + (1.0 - a)
        state.grad_sq_ema = a * state.grad_sq_ema + (1.0 - a) * g * g
        # bias-corrected, so early steps are not dominated by the zero start
        state.v_hat = np.maximum(state.grad_sq_ema / state.ema_weight, V_HAT_FLOOR)
    minv = 1.0 / np.sqrt(state.v_hat)

    if config.friction is None:
        fric = config.mdecay * np.ones_like(minv)
        noise_var = 2.0 * delta**2 * config.mdecay * minv - delta**4
    else:
        fric = delta * minv * config.friction
        noise_var = 2.0 * delta**3 * config.friction * minv * minv - delta**4
    floored = noise_var < 0
    n_floor = int(floored.sum())
    if n_floor:
        noise_var = np.where(floored, 0.0, noise_var)
        if n_floor > 0.01 * noise_var.size:
            state.floor_events += 1
    noise = np.sqrt(noise_var) * state.rng.standard_normal(state.theta.shape)
    state.v = state.v - delta**2 * minv * g - fric * state.v + noise
    state.step_count += 1
    return StepInfo(float(u), float(np.linalg.norm(g)), n_floor / noise_var.size)


class _BatchStream:
    """Uniform mini-batches without replacement within each epoch."""

    def __init__(self, n, batch_size, rng):
        self.n = n
        self.size = min(batch_size, n)
        self.rng = rng
        self._perm = None
        self._pos = n

    def next(self):
        if self.size == self.n:
            return slice(None)
        if self._pos + self.size > self.n:
            self._perm = self.rng.permutation(self.n)
            self._pos = 0
        idx = self._perm[self._pos : self._pos + self.size]
        self._pos += self.size
        return idx


def potential_energy(arch, theta, batch, dataset_size, loss_config):
    """``U = N * (L_f + lambda L_grad) + L_prior`` on ``batch`` and its gradient."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    parts = bnn.objective(arch, theta, batch, loss_config, data_scale=dataset_size)
    return parts.total, parts.gradient


def sample(grad_fn_for, theta0, config, n_data, seed, diagnostics=None):
    """Run a chain and return the kept samples, shape (M, P).

    ``grad_fn_for(batch_index)`` returns the potential function for a
    mini-batch. Kept samples are taken after step ``s`` whenever
    ``s > burn_in`` and ``(s - burn_in) % w == 0`` (1-based ``s``).
    """
    rng = np.random.default_rng(seed)
    state = SamplerState.initial(theta0, rng)
    stream = _BatchStream(n_data, config.batch_size, rng)
    kept = []
    writer = None
    if diagnostics is not None:
        writer = csv.writer(diagnostics, lineterminator="\n")
        writer.writerow(["step", "potential", "grad_norm", "noise_floor_fraction"])
    for s in range(1, config.total_steps + 1):
        info = step(state, config, grad_fn_for(stream.next()), n_data)
        if writer is not None:
            writer.writerow([s, repr(info.potential), repr(info.grad_norm), repr(info.floored_fraction)])
        if s > config.burn_in_steps and (s - config.burn_in_steps) % config.sampling_interval == 0:
            kept.append(state.theta.copy())
    if state.floor_events:
        log.info("noise covariance floored on >1%% of parameters in %d steps", state.floor_events)
    return np.array(kept)


def run(batch, architecture, config, lambda_grad, seed, loss_config=None, diagnostics=None,
        normalization=None):
    """Train a posterior ensemble on ``batch`` (network units) from scratch.

    Fully deterministic given ``seed``.
    """
    if len(batch) < 1:
        raise ValueError("dataset must contain at least one point")
    if loss_config is None:
        loss_config = bnn.LossConfig(lambda_grad)
    elif loss_config.lambda_grad != lambda_grad:
        loss_config = replace(loss_config, lambda_grad=lambda_grad)
    n = len(batch)
    init_rng = np.random.default_rng([seed, 1])
    theta0 = bnn.init_params(architecture, init_rng, loss_config.prior_log_noise)

    def grad_fn_for(idx):
        sub = batch if isinstance(idx, slice) else batch.subset(idx)

        def fn(theta):
            return potential_energy(architecture, theta, sub, n, loss_config)

        return fn

    samples = sample(grad_fn_for, theta0, config, n, [seed, 2], diagnostics)
    return bnn.PosteriorEnsemble(architecture, samples, normalization)
