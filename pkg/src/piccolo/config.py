"""Experiment configuration: TOML schema, validation and round-tripping.

A config has four tables plus an optional ``[sweep]`` table::

    [problem]    what losses the learner faces
    [algorithm]  the base learner and its hyperparameters
    [meta]       how predictions are used (mode, model, fixed point)
    [run]        horizon, weights, seeds
    [sweep]      dotted keys mapped to lists, e.g. "run.N" = [64, 256]

Unknown keys anywhere are rejected with the dotted path of the offender.
"""
from __future__ import annotations

import copy
import dataclasses
import itertools
from dataclasses import dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .errors import ConfigError


@dataclass
class ProblemConfig:
    type: str = "synthetic"  # synthetic | tabular
    # synthetic
    set: str = "simplex"  # simplex | ball | box
    dim: int = 10
    blocks: int = 1
    radius: float = 1.0
    center: list = field(default_factory=list)
    lower: list = field(default_factory=list)
    upper: list = field(default_factory=list)
    family: str = "linear"  # linear | quadratic
    base: list = field(default_factory=list)
    amplitude: float = 0.0
    period: float = 100.0
    jitter: float = 0.0
    curvature: float = 1.0
    path_seed: int = 0
    bias_direction: list = field(default_factory=list)
    sigma_g: float = 0.0
    sigma_ghat: float = 0.0
    bias_sq: float = 0.0
    # tabular
    mdp: str = "gridworld"  # gridworld | garnet | path to an MDP file
    size: int = 5
    slip: float = 0.1
    start: str = "uniform"
    states: int = 10
    actions: int = 4
    branching: int = 3
    mdp_seed: int = 0
    gamma: float = 0.9
    loss: str = "rl"  # rl | il
    samples: int = 0
    init: str = "uniform"
    parametrization: str = "direct"  # direct | softmax
    model_beta: float = 0.0
    model_seed: int = 1


@dataclass
class AlgorithmConfig:
    name: str = "AdaGrad"
    geometry: str = "euclidean"  # euclidean | entropy
    scale: float = 1.0
    eta: float = 0.1
    c: float = 0.0
    G: float = 1.0
    eps: float = 1e-8
    beta1: float = 0.9
    beta2: float = 0.999
    floor: float = 1e-6
    g_init: float = 1.0


@dataclass
class MetaConfig:
    mode: str = "piccolo"  # piccolo | model_free | model_based | dyna
    shift: bool = False
    adam_m_in_prediction: str = "transient"  # transient | shared
    model: str = "zero"
    replay_k: int = 1
    reevaluate: bool = True
    learned_lr: float = 0.5
    fixed_point: bool = False
    fp_max_iters: int = 20
    fp_tol: float = 1e-8
    fp_method: str = "picard"
    fp_memory: int = 5


@dataclass
class RunConfig:
    N: int = 100
    p: float = 0.0
    seeds: int = 1
    seed: int = 0
    audit: bool = True
    regret_on: str = "expected"  # expected | sampled
    save_states: bool = True


@dataclass
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    meta: MetaConfig = field(default_factory=MetaConfig)
    run: RunConfig = field(default_factory=RunConfig)
    sweep: dict = field(default_factory=dict)

    def to_dict(self, with_sweep: bool = True) -> dict:
        d = dataclasses.asdict(self)
        if not with_sweep or not self.sweep:
            d.pop("sweep")
        return d

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())


SECTIONS = {"problem": ProblemConfig, "algorithm": AlgorithmConfig, "meta": MetaConfig, "run": RunConfig}

CHOICES = {
    "problem.type": ("synthetic", "tabular"),
    "problem.set": ("simplex", "ball", "box"),
    "problem.family": ("linear", "quadratic"),
    "problem.start": ("uniform", "corner"),
    "problem.loss": ("rl", "il"),
    "problem.init": ("uniform", "random"),
    "problem.parametrization": ("direct", "softmax"),
    "algorithm.name": ("BasicMD", "AdaGrad", "Adam", "AdaNatGrad", "FTRL"),
    "algorithm.geometry": ("euclidean", "entropy"),
    "meta.mode": ("piccolo", "model_free", "model_based", "dyna"),
    "meta.adam_m_in_prediction": ("transient", "shared"),
    "meta.model": ("zero", "last", "replay", "oracle", "biased", "adversarial", "learned"),
    "meta.fp_method": ("picard", "anderson"),
    "run.regret_on": ("expected", "sampled"),
}

POSITIVE = {"problem.dim", "problem.blocks", "problem.radius", "problem.period", "problem.curvature",
            "problem.size", "problem.states", "problem.actions", "problem.branching",
            "algorithm.scale", "algorithm.eta", "algorithm.G", "algorithm.eps", "algorithm.floor",
            "algorithm.g_init", "meta.replay_k", "meta.learned_lr", "meta.fp_max_iters", "meta.fp_tol",
            "meta.fp_memory", "run.N", "run.seeds"}
NONNEGATIVE = {"problem.amplitude", "problem.jitter", "problem.sigma_g", "problem.sigma_ghat",
               "problem.bias_sq", "problem.samples", "problem.slip", "problem.model_beta",
               "algorithm.c", "run.p", "run.seed"}


def _coerce(path: str, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
            raise ConfigError(f"{path}: expected a list of numbers, got {value!r}")
        return [float(v) for v in value]
    raise ConfigError(f"{path}: unsupported value {value!r}")


def _section(name: str, cls, data) -> object:
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected a table")
    defaults = cls()
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{name}.{key}: unknown key")
    values = {k: _coerce(f"{name}.{k}", getattr(defaults, k), v) for k, v in data.items()}
    return cls(**{**{f.name: getattr(defaults, f.name) for f in fields(cls)}, **values})


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    for path, allowed in CHOICES.items():
        sec, key = path.split(".")
        val = getattr(getattr(cfg, sec), key)
        if val not in allowed:
            raise ConfigError(f"{path}: must be one of {', '.join(allowed)}; got {val!r}")
    for path in POSITIVE | NONNEGATIVE:
        sec, key = path.split(".")
        val = getattr(getattr(cfg, sec), key)
        if path in POSITIVE and not val > 0:
            raise ConfigError(f"{path}: must be positive, got {val!r}")
        if path in NONNEGATIVE and not val >= 0:
            raise ConfigError(f"{path}: must be nonnegative, got {val!r}")
    a = cfg.algorithm
    if not 0 <= a.beta1 < 1 or not 0 <= a.beta2 < 1:
        raise ConfigError("algorithm.beta1/beta2: must lie in [0, 1)")
    if not 0 < cfg.problem.gamma < 1:
        raise ConfigError("problem.gamma: must lie in (0, 1)")
    if not 0 <= cfg.problem.model_beta < 1:
        raise ConfigError("problem.model_beta: must lie in [0, 1)")
    if cfg.problem.type == "synthetic":
        if cfg.problem.set == "simplex" and cfg.problem.dim % cfg.problem.blocks:
            raise ConfigError("problem.blocks: must divide problem.dim")
        for key in ("base", "center", "bias_direction", "lower", "upper"):
            vec = getattr(cfg.problem, key)
            if vec and len(vec) != cfg.problem.dim:
                raise ConfigError(f"problem.{key}: expected {cfg.problem.dim} entries, got {len(vec)}")
    if a.name == "AdaNatGrad" and cfg.problem.parametrization != "softmax":
        raise ConfigError("algorithm.name: AdaNatGrad needs problem.parametrization = \"softmax\"")
    if cfg.problem.parametrization == "softmax" and a.name != "AdaNatGrad":
        raise ConfigError("problem.parametrization: softmax is only supported with AdaNatGrad")
    if a.geometry == "entropy" and a.name not in ("BasicMD", "FTRL"):
        raise ConfigError("algorithm.geometry: entropy is only available for BasicMD and FTRL")
    return cfg


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: expected a table")
    for key in data:
        if key not in SECTIONS and key != "sweep":
            raise ConfigError(f"{key}: unknown table")
    kwargs = {name: _section(name, cls, data.get(name, {})) for name, cls in SECTIONS.items()}
    sweep = data.get("sweep", {})
    if not isinstance(sweep, dict):
        raise ConfigError("sweep: expected a table")
    cfg = ExperimentConfig(**kwargs, sweep=_flatten_sweep(sweep))
    validate(cfg)
    for path, values in cfg.sweep.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep.{path}: expected a nonempty list")
        for v in values:
            set_path(cfg, path, v, validate_after=False)
    validate(cfg)
    return cfg


def _flatten_sweep(sweep: dict, prefix: str = "") -> dict:
    """Accept both quoted dotted keys and nested tables: {"run": {"N": [...]}}."""
    out = {}
    for key, val in sweep.items():
        path = f"{prefix}{key}"
        if isinstance(val, dict):
            out.update(_flatten_sweep(val, path + "."))
        else:
            out[path] = val
    return out


def set_path(cfg: ExperimentConfig, path: str, value, validate_after: bool = True) -> ExperimentConfig:
    """Return a copy of cfg with the dotted field ``path`` set to value."""
    parts = path.split(".")
    if len(parts) != 2 or parts[0] not in SECTIONS:
        raise ConfigError(f"sweep.{path}: not a section.field path")
    sec = getattr(cfg, parts[0])
    if parts[1] not in {f.name for f in fields(sec)}:
        raise ConfigError(f"sweep.{path}: unknown key")
    new = copy.deepcopy(cfg)
    setattr(getattr(new, parts[0]), parts[1], _coerce(f"sweep.{path}", getattr(sec, parts[1]), value))
    if validate_after:
        validate(new)
    return new


def expand(cfg: ExperimentConfig) -> list[tuple[dict, ExperimentConfig]]:
    """Cartesian product of the sweep lists, in declaration order."""
    if not cfg.sweep:
        raise ConfigError("sweep: no list-valued fields to expand")
    keys = list(cfg.sweep)
    out = []
    for combo in itertools.product(*(cfg.sweep[k] for k in keys)):
        point = dict(zip(keys, combo))
        c = copy.deepcopy(cfg)
        c.sweep = {}
        for k, v in point.items():
            c = set_path(c, k, v, validate_after=False)
        out.append((point, validate(c)))
    return out


def loads(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config: {exc}") from exc
    return from_dict(data)


def load(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)
