"""
Bayesian optimization loop with a gradient-informed BNN surrogate.

Each iteration retrains the posterior ensemble from scratch on the current
dataset, minimizes the acquisition function, observes value and gradient at
the chosen point and appends it. Regret is reported in the nonnegative
orientation ``R_t = F_t - f(x*)`` where ``F_t`` is the best value observed
so far (initial design included).
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import acquisition, benchmarks, bnn, sghmc

log = logging.getLogger(__name__)


def child_seed(*keys):
    """A 32-bit integer seed derived from a tuple of nonnegative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


class Dataset:
    """Observed ``(x, y, grad_y)`` triples for one problem."""

    def __init__(self, problem, x=None, y=None, grads=None):
        self.problem = problem
        D = problem.dim
        self.x = np.empty((0, D)) if x is None else np.array(x, float).reshape(-1, D)
        self.y = np.empty(0) if y is None else np.array(y, float).reshape(-1)
        self.grads = np.empty((0, D)) if grads is None else np.array(grads, float).reshape(-1, D)
        if not (len(self.x) == len(self.y) == len(self.grads)):
            raise ValueError("x, y and grads must have the same number of rows")
        for row in self.x:
            if not problem.contains(row):
                raise ValueError(f"point {row} outside bounds of {problem.name}")

    def __len__(self):
        return len(self.y)

    def append(self, x, y, g):
        x = np.asarray(x, float).reshape(1, -1)
        if not self.problem.contains(x[0]):
            raise ValueError(f"point {x[0]} outside bounds of {self.problem.name}")
        self.x = np.vstack([self.x, x])
        self.y = np.append(self.y, float(y))
        self.grads = np.vstack([self.grads, np.asarray(g, float).reshape(1, -1)])

    @property
    def normalization(self):
        return bnn.Normalization.fit(self.problem.lower, self.problem.upper, self.y)

    def to_batch(self, normalization=None):
        nz = normalization or self.normalization
        return bnn.Batch(nz.x_to_unit(self.x), nz.y_to_unit(self.y), nz.grad_to_unit(self.grads))

    @property
    def incumbent(self):
        return float(self.y.min())


def initial_design(problem, seed, size=None):
    """``size`` (default ``2 * D``) uniform random points, observed."""
    n = 2 * problem.dim if size is None else int(size)
    rng = np.random.default_rng(child_seed(seed, 0))
    data = Dataset(problem)
    for x in problem.sample_uniform(rng, n):
        y, g = benchmarks.observe(problem, x, rng)
        data.append(x, y, g)
    return data


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "mccormick"
    acquisition: str = "LCB"
    beta: float = 2.0
    lambda_grad: float = 1.0
    sghmc: sghmc.SghmcConfig = sghmc.SghmcConfig()
    hidden_layers: int = 5
    nodes_per_layer: int = 80
    prior_precision: float = bnn.DEFAULT_PRIOR_PRECISION
    prior_log_noise: float = bnn.DEFAULT_LOG_NOISE
    fan_in_scaled: bool = True
    iterations: int = 50
    seeds: tuple = tuple(range(10))
    initial_design_size: int | None = None
    noise_std: float = 0.0
    restarts: int = 10
    max_iterations: int = 100
    gradient_tolerance: float = 1e-6
    method: str = "ginnbo"
    record_wallclock: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if len(self.seeds) < 1:
            raise ValueError("need at least one seed")
        if self.method not in ("ginnbo", "random"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.lambda_grad < 0:
            raise ValueError("lambda_grad must be nonnegative")
        acquisition.AcquisitionSpec(self.acquisition, self.beta)

    def get_problem(self):
        p = benchmarks.get_problem(self.problem)
        return p.with_noise(self.noise_std) if self.noise_std else p

    def architecture(self, dim):
        return bnn.Architecture(dim, self.hidden_layers, self.nodes_per_layer)

    def loss_config(self):
        return bnn.LossConfig(self.lambda_grad, self.prior_precision, self.prior_log_noise,
                              self.fan_in_scaled)

    def optimizer_config(self, problem):
        return acquisition.OptimizerConfig(
            self.restarts, self.max_iterations, self.gradient_tolerance, problem.bounds
        )


@dataclass
class TraceRecord:
    iteration: int
    x: np.ndarray
    y: float
    incumbent: float
    regret: float
    train_seconds: float = 0.0
    af_seconds: float = 0.0


@dataclass
class RegretTrace:
    problem: str
    seed: int
    records: list = field(default_factory=list)
    failed: bool = False
    message: str = ""

    def __len__(self):
        return len(self.records)

    @property
    def incumbents(self):
        return np.array([r.incumbent for r in self.records])

    @property
    def regrets(self):
        return np.array([r.regret for r in self.records])


def regret(trace, problem):
    """``R_t = F_t - f(x*)`` for every iteration of ``trace``."""
    if problem.optimum_value is None:
        raise ValueError(
            f"{problem.name} has no known optimum; normalize by the best value found instead"
        )
    return np.maximum(trace.incumbents - problem.optimum_value, 0.0)


def aggregate(traces):
    """Per-iteration mean and (population) standard deviation of regret."""
    R = np.array([t.regrets for t in traces])
    return R.mean(axis=0), R.std(axis=0)


def _regret_value(problem, incumbent):
    if problem.optimum_value is None:
        return math.nan
    return max(incumbent - problem.optimum_value, 0.0)


def _train(data, config, arch, seed, step_size=None):
    nz = data.normalization
    batch = data.to_batch(nz)
    cfg = config.sghmc if step_size is None else replace(config.sghmc, step_size=step_size)
    return sghmc.run(batch, arch, cfg, config.lambda_grad, seed,
                     loss_config=config.loss_config(), normalization=nz)


def run_bo(config, seed, on_iteration=None):
    """One seeded GINNBO run (or the random-search control)."""
    problem = config.get_problem()
    data = initial_design(problem, seed, config.initial_design_size)
    arch = config.architecture(problem.dim)
    opt_cfg = config.optimizer_config(problem)
    trace = RegretTrace(problem.name, seed)
    obs_rng = np.random.default_rng(child_seed(seed, 3))
    rand_rng = np.random.default_rng(child_seed(seed, 4))
    clock = time.perf_counter if config.record_wallclock else (lambda: 0.0)

    for t in range(1, config.iterations + 1):
        t0 = clock()
        if config.method == "random":
            x_next = problem.sample_uniform(rand_rng, 1)[0]
            t1 = t2 = clock()
        else:
            train_seed = child_seed(seed, 1, t)
            try:
                ensemble = _train(data, config, arch, train_seed)
            except sghmc.DivergenceError as err:
                delta = config.sghmc.delta(len(data)) / 2.0
                log.warning("seed %s iteration %d: %s; retrying with step size %g", seed, t, err, delta)
                try:
                    ensemble = _train(data, config, arch, train_seed, step_size=delta)
                except sghmc.DivergenceError as err2:
                    trace.failed = True
                    trace.message = f"iteration {t}: {err2}"
                    log.error("seed %s aborted at iteration %d: %s", seed, t, err2)
                    return trace
            t1 = clock()
            spec = acquisition.AcquisitionSpec(config.acquisition, config.beta, data.incumbent)
            result = acquisition.optimize(ensemble, spec, opt_cfg, child_seed(seed, 2, t))
            x_next = result.x
            t2 = clock()
        y, g = benchmarks.observe(problem, x_next, obs_rng)
        data.append(x_next, y, g)
        inc = data.incumbent
        rec = TraceRecord(t, np.array(x_next), y, inc, _regret_value(problem, inc), t1 - t0, t2 - t1)
        trace.records.append(rec)
        if on_iteration is not None:
            on_iteration(rec, data)
    return trace


def run_random_search(config, seed):
    return run_bo(replace(config, method="random"), seed)


# --------------------------------------------------------------------------
# CSV


def trace_header(dim):
    return (["seed", "iteration"] + [f"x_{j + 1}" for j in range(dim)]
            + ["y", "incumbent", "regret", "wallclock_train_s", "wallclock_af_s"])


def trace_rows(trace):
    for r in trace.records:
        yield ([str(trace.seed), str(r.iteration)] + [repr(float(v)) for v in r.x]
               + [repr(float(r.y)), repr(float(r.incumbent)), repr(float(r.regret)),
                  repr(float(r.train_seconds)), repr(float(r.af_seconds))])


def write_traces(path, traces, dim):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_header(dim))
        for t in traces:
            w.writerows(trace_rows(t))


def read_traces(path):
    """Inverse of :func:`write_traces`; returns ``{seed: RegretTrace}``."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        xcols = [c for c in reader.fieldnames if c.startswith("x_")]
        for row in reader:
            seed = int(row["seed"])
            tr = out.setdefault(seed, RegretTrace("", seed))
            tr.records.append(TraceRecord(
                int(row["iteration"]), np.array([float(row[c]) for c in xcols]),
                float(row["y"]), float(row["incumbent"]), float(row["regret"]),
                float(row["wallclock_train_s"]), float(row["wallclock_af_s"]),
            ))
    return out
