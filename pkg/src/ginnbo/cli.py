"""
Command-line runner.

    ginnbo demo1d    --config demo.ini  --out runs/demo
    ginnbo benchmark --config bench.ini --out runs/bench --seeds 0,1,2 --jobs 4
    ginnbo timing    --config timing.ini --out runs/timing

Each command writes its CSV and SVG artifacts, a ``config.ini`` snapshot
and a ``manifest.json`` into ``--out``. Passing a manifest back through
``--config`` re-runs the embedded configuration. Exit status is 0 when
every run succeeded and 2 when at least one seeded run failed.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, benchmarks, bo, experiments, svg
from .config import Config, ConfigError

log = logging.getLogger("ginnbo")


@dataclass
class RunManifest:
    command: str
    config: str
    seeds: list
    outputs: list = field(default_factory=list)
    runs: list = field(default_factory=list)
    version: str = __version__
    started: str = ""
    finished: str = ""

    def write(self, out_dir):
        missing = [p for p in self.outputs if not os.path.exists(os.path.join(out_dir, p))]
        if missing:
            raise RuntimeError(f"manifest references missing outputs: {missing}")
        with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2)
            fh.write("\n")

    @property
    def failed(self):
        return any(r.get("failed") for r in self.runs)


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _r(v):
    return repr(float(v))


def _start(command, cfg, out_dir, seeds):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.ini"), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_ini())
    return RunManifest(command, cfg.to_ini(), list(seeds), ["config.ini"], started=_now())


# --------------------------------------------------------------------------
# demo1d


def _demo_plot(res, path):
    fig = svg.Figure(2, 3, title=f"1D ablation, seed {res.seed}")
    titles = {"joint": "joint loss", "value_only": "function only", "multi_head": "independent outputs"}
    for c, v in enumerate(experiments.VARIANTS):
        if v not in res.fits:
            continue
        fit = res.fits[v]
        top, bottom = fig[0, c], fig[1, c]
        top.title, top.xlabel, top.ylabel = titles[v], "x", "f(x)"
        top.band(res.grid, fit.mean - 2 * fit.std, fit.mean + 2 * fit.std, color=svg.PALETTE[0])
        top.line(res.grid, res.f, color="#000000", label="truth", dash="4 3")
        top.line(res.grid, fit.mean, color=svg.PALETTE[0], label="mean")
        top.points(res.x_train[:, 0], res.y_train, color=svg.PALETTE[1])
        bottom.title, bottom.xlabel, bottom.ylabel = f"{titles[v]}: derivative", "x", "df/dx"
        bottom.band(res.grid, fit.dmean - 2 * fit.dstd, fit.dmean + 2 * fit.dstd, color=svg.PALETTE[2])
        bottom.line(res.grid, res.df, color="#000000", label="truth", dash="4 3")
        bottom.line(res.grid, fit.dmean, color=svg.PALETTE[2], label="mean")
    fig.save(path)


def cmd_demo1d(cfg, out_dir, seeds=None):
    seeds = list(seeds if seeds is not None else cfg["demo1d"]["seeds"])
    man = _start("demo1d", cfg, out_dir, seeds)
    report = []
    for s in seeds:
        log.info("demo1d seed %d", s)
        res = experiments.run_demo1d(cfg, s)
        header = ["x", "f", "df"]
        cols = [res.grid, res.f, res.df]
        for v, fit in res.fits.items():
            header += [f"{v}_mean", f"{v}_lo", f"{v}_hi", f"{v}_dmean", f"{v}_dlo", f"{v}_dhi"]
            cols += [fit.mean, fit.mean - 2 * fit.std, fit.mean + 2 * fit.std,
                     fit.dmean, fit.dmean - 2 * fit.dstd, fit.dmean + 2 * fit.dstd]
        grid_name = f"demo1d_grid_seed{s}.csv"
        _csv(os.path.join(out_dir, grid_name), header, [[_r(c[i]) for c in cols] for i in range(len(res.grid))])
        train_name = f"demo1d_train_seed{s}.csv"
        _csv(os.path.join(out_dir, train_name), ["x", "y"],
             [[_r(x), _r(y)] for x, y in zip(res.x_train[:, 0], res.y_train)])
        plot_name = f"demo1d_seed{s}.svg"
        _demo_plot(res, os.path.join(out_dir, plot_name))
        man.outputs += [grid_name, train_name, plot_name]
        for v, fit in res.fits.items():
            report.append([str(s), v, _r(fit.value_rmse), _r(fit.grad_rmse), _r(fit.fd_consistency),
                           _r(fit.band_train), _r(fit.band_far)])
        man.runs.append({"seed": s, "failed": False})
    _csv(os.path.join(out_dir, "demo1d_report.csv"),
         ["seed", "variant", "value_rmse", "grad_rmse", "fd_consistency", "band_train", "band_far"], report)
    man.outputs.append("demo1d_report.csv")
    man.finished = _now()
    man.write(out_dir)
    return man


# --------------------------------------------------------------------------
# benchmark


def _cell_worker(args):
    ini, cell, cell_path = args
    cfg = Config.from_ini(ini)
    try:
        trace = experiments.run_cell(cfg, cell)
    except Exception as err:  # keep the campaign going; recorded in the manifest
        trace = bo.RegretTrace(cell.problem, cell.seed, failed=True, message=f"{type(err).__name__}: {err}")
    dim = benchmarks.get_problem(cell.problem).dim
    bo.write_traces(cell_path, [trace], dim)
    return trace


def _regret_plot(problem, groups, path):
    fig = svg.Figure(1, 1, panel_width=560, panel_height=360)
    ax = fig[0, 0]
    ax.title, ax.xlabel, ax.ylabel, ax.log_y = f"{problem}: regret", "iteration", "regret", True
    for k, (name, traces) in enumerate(sorted(groups.items())):
        ok = [t for t in traces if not t.failed and len(t)]
        if not ok:
            continue
        T = min(len(t) for t in ok)
        R = np.array([t.regrets[:T] for t in ok])
        mean, std = R.mean(axis=0), R.std(axis=0)
        it = np.arange(1, T + 1)
        color = svg.PALETTE[k % len(svg.PALETTE)]
        ax.band(it, np.maximum(mean - std, mean * 1e-3), mean + std, color=color, opacity=0.15)
        ax.line(it, mean, color=color, label=name.split("_", 1)[1])
    fig.save(path)


def cmd_benchmark(cfg, out_dir, seeds=None, jobs=1):
    if seeds is not None:
        cfg.set("campaign", "seeds", tuple(seeds))
    man = _start("benchmark", cfg, out_dir, cfg["campaign"]["seeds"])
    cell_dir = os.path.join(out_dir, "cells")
    os.makedirs(cell_dir, exist_ok=True)
    cells = experiments.campaign_cells(cfg)
    ini = cfg.to_ini()
    work = [(ini, c, os.path.join(cell_dir, c.name + ".csv")) for c in cells]
    log.info("benchmark: %d runs on %d worker(s)", len(cells), jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            traces = list(pool.map(_cell_worker, work))
    else:
        traces = []
        for i, w in enumerate(work):
            log.info("run %d/%d %s", i + 1, len(work), w[1].name)
            traces.append(_cell_worker(w))

    groups = {}
    for cell, trace in zip(cells, traces):
        groups.setdefault(cell.problem, {}).setdefault(cell.group, []).append(trace)
        man.runs.append({"problem": cell.problem, "acquisition": cell.acquisition,
                         "lambda_grad": cell.lambda_grad, "seed": cell.seed, "method": cell.method,
                         "failed": trace.failed, "message": trace.message,
                         "path": os.path.join("cells", cell.name + ".csv")})
        man.outputs.append(os.path.join("cells", cell.name + ".csv"))
    for problem, by_group in groups.items():
        dim = benchmarks.get_problem(problem).dim
        for name, traces_ in by_group.items():
            fname = name + ".csv"
            bo.write_traces(os.path.join(out_dir, fname), traces_, dim)
            man.outputs.append(fname)
        plot = f"{problem}_regret.svg"
        _regret_plot(problem, by_group, os.path.join(out_dir, plot))
        man.outputs.append(plot)
    man.finished = _now()
    man.write(out_dir)
    return man


# --------------------------------------------------------------------------
# timing


def cmd_timing(cfg, out_dir, seeds=None):
    if seeds:
        cfg.set("timing", "seed", int(seeds[0]))
    man = _start("timing", cfg, out_dir, [cfg["timing"]["seed"]])
    table, runs = [], []
    for name in cfg["timing"]["problems"]:
        log.info("timing %s", name)
        rs = experiments.timing_study(cfg, name)
        mean, std = experiments.timing_summary(rs)
        table.append([name, str(rs[0].dim), _r(mean), _r(std)])
        runs += [[r.problem, str(r.dim), str(r.repetition), _r(r.seconds), _r(r.prediction)] for r in rs]
        man.runs.append({"problem": name, "failed": False})
    _csv(os.path.join(out_dir, "timing.csv"), ["problem", "D", "mean", "std"], table)
    _csv(os.path.join(out_dir, "timing_runs.csv"), ["problem", "D", "repetition", "seconds", "prediction"], runs)
    man.outputs += ["timing.csv", "timing_runs.csv"]
    man.finished = _now()
    man.write(out_dir)
    return man


# --------------------------------------------------------------------------
# entry point


def _seed_list(s):
    try:
        return [int(p) for p in s.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")


def build_parser():
    p = argparse.ArgumentParser(prog="ginnbo", description=__doc__.strip().splitlines()[0])
    p.add_argument("--version", action="version", version=f"ginnbo {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("demo1d", "1D ablation of the gradient-informed loss"),
                        ("benchmark", "seeded regret campaign"),
                        ("timing", "surrogate training time across dimensions")]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="INI file or manifest.json (defaults when omitted)")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--seeds", type=_seed_list, help="comma-separated seeds overriding the config")
        s.add_argument("--jobs", type=int, default=1, help="parallel seeded runs (benchmark only)")
        s.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        cfg = Config.load(args.config) if args.config else Config()
        cfg.validate()
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
    except (OSError, ConfigError, ValueError) as err:
        print(f"ginnbo: configuration error: {err}", file=sys.stderr)
        return 1
    if args.command == "demo1d":
        man = cmd_demo1d(cfg, args.out, args.seeds)
    elif args.command == "benchmark":
        man = cmd_benchmark(cfg, args.out, args.seeds, args.jobs)
    else:
        man = cmd_timing(cfg, args.out, args.seeds)
    if man.failed:
        bad = [r for r in man.runs if r.get("failed")]
        print(f"ginnbo: {len(bad)} run(s) failed; see {os.path.join(args.out, 'manifest.json')}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
