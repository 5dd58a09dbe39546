"""Experiment configuration: a YAML file with an exact, fully specified field set."""
from __future__ import annotations

import copy
import dataclasses
import importlib
from pathlib import Path

import yaml

from .errors import ConfigurationError
from .game import PredefinedTimeParams, StrategyParams
from .problems import EXAMPLES, Problem, make_problem
from .simulator import SimConfig
from .trainer import TrainConfig
from .valuenet import MLPConfig

# field -> type; nested dicts are sections.  "real|derived" etc. allow a keyword.
SCHEMA = {
    "example": "str",
    "factory": "str|null",
    "gamma1": "real",
    "gamma2": "real",
    "predefined_time": {
        "alpha": "real|derived", "beta": "real|derived", "p": "real|derived",
        "q": "real|derived", "r": "real|derived", "T_p": "real|gamma",
    },
    "network": {"hidden_layers": "int", "hidden_width": "int", "activation": "str",
                "wrapper": "str|null"},
    "trainer": {"mu0": "real", "growth": "real", "outer_iterations": "int",
                "collocation_size": "int", "margin": "real", "memory": "int",
                "max_inner_iters": "int", "gtol": "real", "indicator": "str",
                "violation_tol": "real"},
    "simulation": {"step": "real", "horizon": "real|T_p", "stop_norm": "real",
                   "boundary_guard": "real", "initial_conditions": "str|null",
                   "random_count": "int", "random_margin": "real", "settle_tol": "real"},
    "evaluation": {"grid_per_axis": "int", "grid_margin": "real"},
    "seed": "int",
    "out": "str|null",
}

DEFAULTS = {
    "example": "bounded",
    "factory": None,
    "gamma1": 0.5,
    "gamma2": 1.5,
    "predefined_time": {"alpha": "derived", "beta": "derived", "p": "derived",
                        "q": "derived", "r": "derived", "T_p": "gamma"},
    "network": {"hidden_layers": 3, "hidden_width": 32, "activation": "tanh", "wrapper": None},
    "trainer": {"mu0": 1e-4, "growth": 2.0, "outer_iterations": 10, "collocation_size": 2000,
                "margin": 0.1, "memory": 10, "max_inner_iters": 500, "gtol": 1e-9,
                "indicator": "current", "violation_tol": 1e-3},
    "simulation": {"step": 1e-3, "horizon": "T_p", "stop_norm": 1e-8, "boundary_guard": 1e-6,
                   "initial_conditions": None, "random_count": 100, "random_margin": 0.05,
                   "settle_tol": 1e-3},
    "evaluation": {"grid_per_axis": 81, "grid_margin": 0.01},
    "seed": 0,
    "out": None,
}


def _coerce(name, value, kind):
    options = kind.split("|")
    if value is None and "null" in options:
        return None
    if isinstance(value, str) and value in options:
        return value
    if "real" in options and not isinstance(value, bool):
        try:
            return float(value)
        except (TypeError, ValueError):
            pass
    if "int" in options and isinstance(value, int) and not isinstance(value, bool):
        return value
    if "str" in options and isinstance(value, str):
        return value
    raise ConfigurationError(f"config field {name!r}: expected {kind}, got {value!r}")


def _validate(raw, schema, prefix=""):
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config section {prefix or '<root>'!r} must be a mapping")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigurationError(f"unknown config field {prefix + unknown[0]!r}")
    out = {}
    for key, kind in schema.items():
        name = prefix + key
        if key not in raw:
            raise ConfigurationError(f"missing config field {name!r}")
        if isinstance(kind, dict):
            out[key] = _validate(raw[key], kind, name + ".")
        else:
            out[key] = _coerce(name, raw[key], kind)
    return out


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    data: dict

    def __getitem__(self, key):
        return self.data[key]

    @classmethod
    def from_dict(cls, raw):
        cfg = cls(_validate(raw, SCHEMA))
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"config {path} is not valid YAML: {exc}") from None
        return cls.from_dict(raw if raw is not None else {})

    @classmethod
    def default(cls, **overrides):
        raw = copy.deepcopy(DEFAULTS)
        raw.update(overrides)
        return cls.from_dict(raw)

    def with_seed(self, seed):
        data = copy.deepcopy(self.data)
        data["seed"] = int(seed)
        return ExperimentConfig(data)

    def check(self):
        """Cross-field constraints; raises ConfigurationError naming the violated condition."""
        d = self.data
        if d["example"] not in EXAMPLES + ("custom",):
            raise ConfigurationError(f"example must be one of {EXAMPLES + ('custom',)}, "
                                     f"got {d['example']!r}")
        if d["example"] == "custom" and not d["factory"]:
            raise ConfigurationError("example 'custom' requires factory: 'module:function'")
        StrategyParams(d["gamma1"], d["gamma2"])
        self.predefined_time()
        self.mlp_config()
        self.train_config()
        self.sim_config()
        if d["evaluation"]["grid_per_axis"] < 2:
            raise ConfigurationError("evaluation.grid_per_axis must be at least 2")
        if not d["evaluation"]["grid_margin"] > 0:
            raise ConfigurationError("evaluation.grid_margin must be positive")

    def predefined_time(self):
        d, pt = self.data, self.data["predefined_time"]
        g1, g2 = d["gamma1"], d["gamma2"]
        derived = {"alpha": 2 ** ((g1 + 1) / 2), "beta": 2.0, "p": (g1 + 1) / 2,
                   "q": (g2 + 1) / 2, "r": 1.0}
        vals = {k: derived[k] if pt[k] == "derived" else pt[k] for k in derived}
        T_p = None if pt["T_p"] == "gamma" else pt["T_p"]
        return PredefinedTimeParams(vals["alpha"], vals["beta"], vals["p"], vals["q"], vals["r"], T_p)

    def mlp_config(self):
        n = self.data["network"]
        return MLPConfig(2, n["hidden_layers"], n["hidden_width"], n["activation"], self.data["seed"])

    def train_config(self):
        return TrainConfig(seed=self.data["seed"], **self.data["trainer"])

    def sim_config(self, horizon=None):
        s = self.data["simulation"]
        if horizon is None and s["horizon"] != "T_p":
            horizon = s["horizon"]
        return SimConfig(s["step"], horizon, s["stop_norm"], s["boundary_guard"])

    def problem(self) -> Problem:
        d = self.data
        ptp = self.predefined_time()
        T_p = None if d["predefined_time"]["T_p"] == "gamma" else d["predefined_time"]["T_p"]
        if d["example"] == "custom":
            problem = load_factory(d["factory"])(gamma1=d["gamma1"], gamma2=d["gamma2"], T_p=T_p)
            if not isinstance(problem, Problem):
                raise ConfigurationError(f"factory {d['factory']!r} did not return a Problem")
        else:
            problem = make_problem(d["example"], d["gamma1"], d["gamma2"], T_p,
                                   d["network"]["wrapper"])
        return dataclasses.replace(problem, ptp=ptp)


def load_factory(spec):
    """Resolve ``"package.module:function"``."""
    mod_name, sep, attr = spec.partition(":")
    if not sep or not mod_name or not attr:
        raise ConfigurationError(f"factory must look like 'module:function', got {spec!r}")
    try:
        return getattr(importlib.import_module(mod_name), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigurationError(f"cannot load factory {spec!r}: {exc}") from None


def dump_default(path: Path, **overrides):
    raw = copy.deepcopy(DEFAULTS)
    raw.update(overrides)
    with open(path, "w") as fh:
        yaml.safe_dump(raw, fh, sort_keys=False)
