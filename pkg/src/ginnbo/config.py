"""
Typed INI configuration for the command-line runner.

Every key has a declared type and default. Unknown sections or keys are
hard errors, since a mistyped hyperparameter otherwise goes unnoticed.
Lists are comma separated; optional values accept ``none``.
"""

from __future__ import annotations

import configparser
import io
import json

from . import benchmarks, bnn, bo, sghmc


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _optional(kind):
    def parse(s):
        return None if s.strip().lower() in ("", "none") else kind(s)
    parse.__name__ = f"optional {kind.__name__}"
    return parse


def _list(kind):
    def parse(s):
        return tuple(kind(p.strip()) for p in s.split(",") if p.strip())
    parse.__name__ = f"list of {kind.__name__}"
    return parse


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


_SG = sghmc.SghmcConfig()

# section -> key -> (parser, default)
SCHEMA = {
    "problem": {
        "noise_std": (float, 0.0),
        "initial_design_size": (_optional(int), None),
    },
    "architecture": {
        "hidden_layers": (int, 5),
        "nodes_per_layer": (int, 80),
        "prior_precision": (float, bnn.DEFAULT_PRIOR_PRECISION),
        "prior_log_noise": (float, bnn.DEFAULT_LOG_NOISE),
        "fan_in_scaled": (_bool, True),
    },
    "sghmc": {
        "total_steps": (int, _SG.total_steps),
        "burn_in_steps": (int, _SG.burn_in_steps),
        "learning_rate": (float, _SG.learning_rate),
        "step_size": (_optional(float), None),
        "mdecay": (float, _SG.mdecay),
        "friction": (_optional(float), None),
        "sampling_interval": (int, _SG.sampling_interval),
        "batch_size": (int, _SG.batch_size),
        "ema_decay": (_optional(float), None),
    },
    "acquisition": {
        "kinds": (_list(str), ("LCB", "LogEI")),
        "beta": (float, 2.0),
        "restarts": (int, 10),
        "max_iterations": (int, 100),
        "gradient_tolerance": (float, 1e-6),
    },
    "campaign": {
        "problems": (_list(str), ("mccormick", "rosenbrock4", "hartmann6")),
        "lambda_grads": (_list(float), (1.0, 0.0)),
        "seeds": (_list(int), tuple(range(10))),
        "iterations": (int, 50),
        "random_search": (_bool, True),
        "record_wallclock": (_bool, True),
    },
    "demo1d": {
        "problem": (str, "demo1d"),
        "train_points": (int, 8),
        "grid_points": (int, 200),
        "seeds": (_list(int), tuple(range(5))),
        "fd_step": (float, 1e-5),
    },
    "timing": {
        "problems": (_list(str), ("mccormick", "hartmann6")),
        "repetitions": (int, 10),
        "extra_points": (int, 20),
        "points": (_optional(int), None),
        "seed": (int, 0),
    },
}


class ConfigError(ValueError):
    pass


class Config:
    """Parsed configuration; ``cfg["sghmc"]["total_steps"]`` style access."""

    def __init__(self, values=None):
        self.values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
        for sec, keys in (values or {}).items():
            for k, v in keys.items():
                self.set(sec, k, v)

    def __getitem__(self, section):
        return self.values[section]

    def set(self, section, key, value):
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]; expected one of {sorted(SCHEMA)}")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]; expected one of {sorted(SCHEMA[section])}")
        parser = SCHEMA[section][key][0]
        if isinstance(value, str):
            try:
                value = parser(value)
            except ValueError as err:
                raise ConfigError(f"[{section}] {key}: expected {parser.__name__}, got {value!r}") from err
        self.values[section][key] = value

    # ------------------------------------------------------------ loading

    @classmethod
    def from_ini(cls, text):
        cp = configparser.ConfigParser(interpolation=None, default_section="__unused__")
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as err:
            raise ConfigError(str(err)) from err
        return cls({sec: dict(cp[sec]) for sec in cp.sections()})

    @classmethod
    def load(cls, path):
        """Read an INI file, or the config embedded in a run manifest (``.json``)."""
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        if str(path).endswith(".json"):
            return cls.from_ini(json.loads(text)["config"])
        return cls.from_ini(text)

    def to_ini(self):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for sec, keys in self.values.items():
            cp[sec] = {k: _fmt(v) for k, v in keys.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    # ------------------------------------------------------------ builders

    def sghmc_config(self):
        return sghmc.SghmcConfig(**self["sghmc"])

    def experiment(self, problem, acquisition="LCB", lambda_grad=1.0, method="ginnbo"):
        a, arch, c, p = self["acquisition"], self["architecture"], self["campaign"], self["problem"]
        return bo.ExperimentConfig(
            problem=problem,
            acquisition=acquisition,
            beta=a["beta"],
            lambda_grad=lambda_grad,
            sghmc=self.sghmc_config(),
            hidden_layers=arch["hidden_layers"],
            nodes_per_layer=arch["nodes_per_layer"],
            prior_precision=arch["prior_precision"],
            prior_log_noise=arch["prior_log_noise"],
            fan_in_scaled=arch["fan_in_scaled"],
            iterations=c["iterations"],
            seeds=tuple(c["seeds"]),
            initial_design_size=p["initial_design_size"],
            noise_std=p["noise_std"],
            restarts=a["restarts"],
            max_iterations=a["max_iterations"],
            gradient_tolerance=a["gradient_tolerance"],
            method=method,
            record_wallclock=c["record_wallclock"],
        )

    def loss_config(self, lambda_grad):
        arch = self["architecture"]
        return bnn.LossConfig(lambda_grad, arch["prior_precision"], arch["prior_log_noise"],
                              arch["fan_in_scaled"])

    def validate(self):
        """Construct every derived object once so bad values fail early."""
        self.sghmc_config()
        for sec in ("campaign", "timing"):
            if not self[sec]["problems"]:
                raise ConfigError(f"[{sec}] problems is empty")
            for name in self[sec]["problems"]:
                benchmarks.get_problem(name)
        benchmarks.get_problem(self["demo1d"]["problem"])
        for kind in self["acquisition"]["kinds"]:
            for lam in self["campaign"]["lambda_grads"]:
                self.experiment(self["campaign"]["problems"][0], kind, lam)
        return self
