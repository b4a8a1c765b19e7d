"""Experiment configuration: one JSON document, every field defaulted.

Example (all values shown are the defaults)::

    {
      "seed": 0,
      "data": {"source": "synthetic", "path": null, "labels_path": null,
               "synthetic": {"generator": "planted_factorization",
                             "sizes": [64, 48, 32], "sparsity": 5,
                             "n_samples": 400, "noise": 0.0,
                             "n_features": 64, "n_classes": 4,
                             "mean_scale": 1.0, "class_noise": 0.5,
                             "samples_per_class": 60}},
      "operator": {"kind": "dense_gaussian", "ratio": 0.25, "m": null,
                   "density": 0.5, "kept_rows": null, "seed": null},
      "model": {"method": "dbcs", "atoms": [48, 32], "lambda": null,
                "mu": 0.0, "sweeps": 20, "dictionary": "auto",
                "solver": {"ista_max_iters": 100, "cg_max_iters": 50,
                           "tol": 1e-6, "safety": 0.95, "power_iters": 50,
                           "sweep_tol": 1e-6}},
      "eval": {"train_fraction": 0.5, "k": 1,
               "feature_protocol": "frozen_encode"},
      "output_dir": "out"
    }

Unknown keys anywhere are rejected.  ``DBCS_SEED`` in the environment
overrides ``seed``.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .exceptions import ConfigError
from .model import TrainOptions
from .operators import KINDS
from .solvers import SolverOptions
from .synthetic import SyntheticSpec

METHODS = ("dbcs", "bcs", "dl", "cs_ista")
PROTOCOLS = ("frozen_encode", "transductive")


@dataclass
class DataConfig:
    source: str = "synthetic"
    path: str | None = None
    labels_path: str | None = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)


@dataclass
class OperatorConfig:
    kind: str = "dense_gaussian"
    ratio: float = 0.25
    m: int | None = None
    density: float = 0.5
    kept_rows: list | None = None
    seed: int | None = None


@dataclass
class SolverConfig:
    ista_max_iters: int = 100
    cg_max_iters: int = 50
    tol: float = 1e-6
    safety: float = 0.95
    power_iters: int = 50
    sweep_tol: float = 1e-6

    def train_options(self):
        ista = SolverOptions(self.ista_max_iters, self.tol, self.safety, self.power_iters)
        cg = SolverOptions(self.cg_max_iters, self.tol, self.safety, self.power_iters)
        return TrainOptions(ista, cg, self.sweep_tol)


@dataclass
class ModelConfig:
    method: str = "dbcs"
    atoms: list = field(default_factory=lambda: [48, 32])
    lam: float | None = field(default=None, metadata={"key": "lambda"})
    mu: float = 0.0
    sweeps: int = 20
    # cs_ista only: "auto" (ground truth when planted, else identity),
    # "ground_truth", "identity", or a path to a DBCS1 file
    dictionary: str = "auto"
    solver: SolverConfig = field(default_factory=SolverConfig)


@dataclass
class EvalConfig:
    train_fraction: float = 0.5
    k: int = 1
    feature_protocol: str = "frozen_encode"


@dataclass
class ExperimentConfig:
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    operator: OperatorConfig = field(default_factory=OperatorConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: str = "out"

    def validate(self):
        _check_optional(self.model.lam, (int, float), "model.lambda")
        _check_optional(self.operator.m, int, "operator.m")
        _check_optional(self.operator.seed, int, "operator.seed")
        _check_optional(self.operator.kept_rows, list, "operator.kept_rows")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.data.source not in ("synthetic", "file"):
            raise ConfigError(f"data.source must be 'synthetic' or 'file', got {self.data.source!r}")
        if self.data.source == "file" and not self.data.path:
            raise ConfigError("data.path is required when data.source is 'file'")
        if self.data.source == "synthetic":
            self.data.synthetic.validate()
        if self.operator.kind not in KINDS:
            raise ConfigError(f"operator.kind must be one of {KINDS}")
        if not 0 < self.operator.ratio <= 1:
            raise ConfigError("operator.ratio must lie in (0, 1]")
        if not 0 < self.operator.density <= 1:
            raise ConfigError("operator.density must lie in (0, 1]")
        m = self.model
        if m.method not in METHODS:
            raise ConfigError(f"model.method must be one of {METHODS}")
        if not m.atoms or min(m.atoms) < 1:
            raise ConfigError("model.atoms must be a non-empty list of positive integers")
        if m.method in ("bcs", "dl") and len(m.atoms) != 1:
            raise ConfigError(f"method {m.method!r} is single-layer; give exactly one atom count")
        if m.lam is not None and m.lam < 0:
            raise ConfigError("model.lambda must be nonnegative")
        if m.mu < 0:
            raise ConfigError("model.mu must be nonnegative")
        if m.sweeps < 1:
            raise ConfigError("model.sweeps must be >= 1")
        try:
            m.solver.train_options()
        except ValueError as exc:
            raise ConfigError(f"model.solver: {exc}") from exc
        e = self.eval
        if not 0 < e.train_fraction < 1:
            raise ConfigError("eval.train_fraction must lie in (0, 1)")
        if e.k < 1:
            raise ConfigError("eval.k must be >= 1")
        if e.feature_protocol not in PROTOCOLS:
            raise ConfigError(f"eval.feature_protocol must be one of {PROTOCOLS}")
        return self

    def to_dict(self):
        return _dump(self)

    @classmethod
    def from_dict(cls, d):
        cfg = _load(cls, d, "config")
        return cfg.validate()


def _check_optional(value, types, where):
    if value is not None and (isinstance(value, bool) or not isinstance(value, types)):
        raise ConfigError(f"{where} has the wrong type: {value!r}")


def _key(f):
    return f.metadata.get("key", f.name)


def _dump(obj):
    if dataclasses.is_dataclass(obj):
        return {_key(f): _dump(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_dump(v) for v in obj]
    return obj


def _check_type(value, default, where):
    # fields defaulting to None are checked by validate()
    if default is None:
        return
    expected = type(default)
    ok = isinstance(value, expected) and not (isinstance(value, bool) and expected is not bool)
    if expected is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    if not ok:
        raise ConfigError(f"{where} must be of type {expected.__name__}, got {value!r}")


def _load(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a JSON object")
    fields = {_key(f): f for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kwargs = {}
    for key, value in d.items():
        f = fields[key]
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default):
            value = _load(type(default), value, f"{where}.{key}")
        else:
            _check_type(value, default, f"{where}.{key}")
        kwargs[f.name] = value
    return cls(**kwargs)


def load_config(path, env=None):
    """Read a config file, apply ``DBCS_SEED`` and validate."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    env = os.environ if env is None else env
    if env.get("DBCS_SEED"):
        try:
            raw = dict(raw, seed=int(env["DBCS_SEED"]))
        except ValueError as exc:
            raise ConfigError(f"DBCS_SEED must be an integer, got {env['DBCS_SEED']!r}") from exc
    return ExperimentConfig.from_dict(raw)
