"""
Experiment drivers behind the command-line runner.

Three studies are provided. The 1D ablation compares a joint-loss
surrogate, a function-only surrogate and an independent-output network.
The regret campaign runs seeded BO over a grid of problems, acquisition
functions and gradient weights. The timing study measures training time
at fixed settings across input dimensions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import benchmarks, bnn, bo, sghmc

VARIANTS = ("joint", "value_only", "multi_head")


# --------------------------------------------------------------------------
# 1D ablation


@dataclass
class DemoFit:
    variant: str
    mean: np.ndarray
    std: np.ndarray
    dmean: np.ndarray
    dstd: np.ndarray
    value_rmse: float
    grad_rmse: float
    fd_consistency: float
    band_train: float
    band_far: float


@dataclass
class DemoResult:
    seed: int
    x_train: np.ndarray
    y_train: np.ndarray
    grid: np.ndarray
    f: np.ndarray
    df: np.ndarray
    fits: dict


def _demo_architecture(cfg, variant, dim):
    a = cfg["architecture"]
    out = dim + 1 if variant == "multi_head" else 1
    return bnn.Architecture(dim, a["hidden_layers"], a["nodes_per_layer"], output_dim=out)


def train_demo_variant(cfg, data, variant, seed):
    lam = 0.0 if variant == "value_only" else 1.0
    arch = _demo_architecture(cfg, variant, data.problem.dim)
    nz = data.normalization
    return sghmc.run(data.to_batch(nz), arch, cfg.sghmc_config(), lam, seed,
                     loss_config=cfg.loss_config(lam), normalization=nz)


def _heads(ens, x):
    """Value and derivative moments (problem units) of a multi-head ensemble."""
    nz = ens.normalization
    out = ens.head_outputs(nz.x_to_unit(x))
    s2 = ens.noise_var
    v, d = out[..., 0], out[..., 1:]
    mean = nz.y_from_unit(v.mean(axis=0))
    var = (v.var(axis=0) + s2) * nz.y_std**2
    dmean = d.mean(axis=0) / nz.grad_factor
    dvar = (d.var(axis=0) + s2) / nz.grad_factor**2
    return mean, var, dmean, dvar


def demo_moments(ens, variant, x):
    x = np.atleast_2d(x)
    if variant == "multi_head":
        return _heads(ens, x)
    return ens.predict_many(x)


def fd_consistency(ens, variant, grid, h):
    """RMS gap between a central difference of the predicted mean and the predicted derivative."""
    m_plus = demo_moments(ens, variant, grid + h)[0]
    m_minus = demo_moments(ens, variant, grid - h)[0]
    fd = (m_plus - m_minus) / (2 * h)
    dmean = demo_moments(ens, variant, grid)[2][:, 0]
    return float(np.sqrt(np.mean((fd - dmean) ** 2)))


def evaluate_demo_fit(ens, variant, grid, f, df, x_train, h):
    mean, var, dmean, dvar = demo_moments(ens, variant, grid)
    std, dstd = np.sqrt(var), np.sqrt(dvar[:, 0])
    train_std = np.sqrt(demo_moments(ens, variant, x_train)[1])
    dist = np.min(np.abs(grid - x_train[:, 0][None, :]), axis=1)
    far = int(np.argmax(dist))
    return DemoFit(
        variant, mean, std, dmean[:, 0], dstd,
        float(np.sqrt(np.mean((mean - f) ** 2))),
        float(np.sqrt(np.mean((dmean[:, 0] - df) ** 2))),
        fd_consistency(ens, variant, grid, h),
        float(np.mean(4 * train_std)),
        float(4 * std[far]),
    )


def run_demo1d(cfg, seed, variants=VARIANTS):
    d = cfg["demo1d"]
    problem = benchmarks.get_problem(d["problem"])
    if problem.dim != 1:
        raise ValueError(f"demo1d needs a 1D problem, got {problem.name} (D={problem.dim})")
    data = bo.initial_design(problem, seed, d["train_points"])
    grid = np.linspace(problem.lower[0], problem.upper[0], d["grid_points"])[:, None]
    f = np.array([problem.evaluate(x) for x in grid])
    df = np.array([problem.gradient(x)[0] for x in grid])
    fits = {}
    for v in variants:
        ens = train_demo_variant(cfg, data, v, bo.child_seed(seed, 1))
        fits[v] = evaluate_demo_fit(ens, v, grid, f, df, data.x, d["fd_step"])
    return DemoResult(seed, data.x.copy(), data.y.copy(), grid[:, 0], f, df, fits)


# --------------------------------------------------------------------------
# timing


@dataclass
class TimingRun:
    problem: str
    dim: int
    repetition: int
    seconds: float
    prediction: float


def timing_study(cfg, problem_name):
    """Train the surrogate ``repetitions`` times on one fixed dataset."""
    t = cfg["timing"]
    problem = benchmarks.get_problem(problem_name)
    n = t["points"] if t["points"] is not None else 2 * problem.dim + t["extra_points"]
    data = bo.initial_design(problem, t["seed"], n)
    nz = data.normalization
    batch = data.to_batch(nz)
    exp = cfg.experiment(problem_name)
    arch = exp.architecture(problem.dim)
    sg = cfg.sghmc_config()
    runs = []
    for r in range(t["repetitions"]):
        t0 = time.perf_counter()
        ens = sghmc.run(batch, arch, sg, 1.0, bo.child_seed(t["seed"], 1),
                        loss_config=cfg.loss_config(1.0), normalization=nz)
        dt = time.perf_counter() - t0
        pred = float(ens.predict_many(data.x[:1])[0][0])
        runs.append(TimingRun(problem.name, problem.dim, r, dt, pred))
    return runs


def timing_summary(runs):
    s = np.array([r.seconds for r in runs])
    return float(s.mean()), float(s.std(ddof=1)) if len(s) > 1 else 0.0


# --------------------------------------------------------------------------
# regret campaign


@dataclass(frozen=True)
class Cell:
    problem: str
    acquisition: str
    lambda_grad: float
    seed: int
    method: str = "ginnbo"

    @property
    def group(self):
        if self.method == "random":
            return f"{self.problem}_random"
        return f"{self.problem}_{self.acquisition}_lambda{self.lambda_grad:g}"

    @property
    def name(self):
        return f"{self.group}_seed{self.seed}"


def campaign_cells(cfg):
    c = cfg["campaign"]
    cells = []
    for p in c["problems"]:
        for af in cfg["acquisition"]["kinds"]:
            for lam in c["lambda_grads"]:
                cells.extend(Cell(p, af, float(lam), s) for s in c["seeds"])
        if c["random_search"]:
            cells.extend(Cell(p, "LCB", 0.0, s, "random") for s in c["seeds"])
    return cells


def run_cell(cfg, cell):
    exp = cfg.experiment(cell.problem, cell.acquisition, cell.lambda_grad, cell.method)
    return bo.run_bo(exp, cell.seed)
