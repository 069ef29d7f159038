"""YAML experiment configuration.

A config is a tree of small dataclasses.  Unknown keys, wrong types and
violated conditions raise ``ConfigError`` naming the offending field (and
the line when the YAML itself fails to parse).  See ``docs/config.md`` for
the full schema.
"""
from __future__ import annotations

import dataclasses
import enum
import hashlib
import re
import typing
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import yaml

from .basis import BasisSpec, Family
from .prior import Context, PriorParams, fernique_rstar, kappa_star

_FLOAT_RE = re.compile(r"[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?")


class ConfigError(ValueError):
    pass


class Experiment(str, enum.Enum):
    SAMPLE_PRIOR = "SamplePrior"
    SOLVE_FORWARD = "SolveForward"
    RUN_CHAIN = "RunChain"
    TRUNCATION_CONVERGENCE = "TruncationConvergence"
    DATA_LIPSCHITZ = "DataLipschitz"
    FERNIQUE_CHECK = "FerniqueCheck"
    PROP22_CHECK = "Prop22Check"
    WEAK_ERRORS = "WeakErrors"


# experiments whose theory needs draws in C^t
NEEDS_HOLDER = {Experiment.TRUNCATION_CONVERGENCE, Experiment.FERNIQUE_CHECK, Experiment.WEAK_ERRORS}
NEEDS_DATA = {Experiment.RUN_CHAIN, Experiment.TRUNCATION_CONVERGENCE, Experiment.DATA_LIPSCHITZ, Experiment.WEAK_ERRORS}


@dataclass
class PriorConfig:
    s: float = 1.2
    q: float = 1.5
    kappa: float = 1.0
    dim: int = 1
    basis: str = "haar"

    def build(self) -> PriorParams:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return PriorParams(self.s, self.q, self.kappa, BasisSpec(Family(self.basis), self.dim))


@dataclass
class GridConfig:
    n_per_axis: int = 256
    solver_tol: float = 1e-10
    n_list: Optional[List[int]] = None


@dataclass
class ForcingConfig:
    f: str = "manufactured"  # manufactured | zero
    f_amplitude: float = 1.0
    g: str = "zero"  # zero | sine
    g_amplitude: float = 0.0
    u: str = "zero"  # log-permeability for SolveForward: zero | prior_draw


@dataclass
class ObservationConfig:
    n_points: Optional[int] = 8
    points: Optional[List[List[float]]] = None
    sigma: Optional[float] = 0.1
    gamma: Optional[List[List[float]]] = None
    y: Optional[List[float]] = None
    truth_seed: Optional[int] = None
    truth_coefs: Optional[List[float]] = None


@dataclass
class SamplingConfig:
    N: int = 64
    N_ref: Optional[int] = None
    M: int = 1000
    t: Optional[float] = None


@dataclass
class McmcConfig:
    n_steps: int = 10000
    step_size: float = 0.1
    thin: int = 1
    tune: bool = False


@dataclass
class ListsConfig:
    N_list: Optional[List[int]] = None
    t_list: Optional[List[float]] = None
    alpha_list: Optional[List[float]] = None
    delta_list: Optional[List[float]] = None


@dataclass
class ExperimentConfig:
    experiment: Experiment
    seed: int
    output_dir: str = "out"
    prior: PriorConfig = field(default_factory=PriorConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    forcing: ForcingConfig = field(default_factory=ForcingConfig)
    observation: ObservationConfig = field(default_factory=ObservationConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    lists: ListsConfig = field(default_factory=ListsConfig)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["experiment"] = self.experiment.value
        return out

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def digest(self) -> str:
        """Hash of everything that affects results (the output location does not)."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(yaml.safe_dump(d, sort_keys=True).encode()).hexdigest()

    def validate(self) -> "ExperimentConfig":
        _validate(self)
        return self


# ---------------------------------------------------------------------------
# parsing


def _check_type(value, tp, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _check_type(value, inner[0], path)
    if origin in (list, List):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        return [_check_type(v, args[0], f"{path}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        # YAML 1.1 reads exponent literals without a dot (1e-12) as strings
        if isinstance(value, str) and _FLOAT_RE.fullmatch(value.strip()):
            return float(value)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(value)
        except ValueError:
            raise ConfigError(f"{path}: {value!r} is not one of {[e.value for e in tp]}") from None
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    raise TypeError(f"unsupported config type {tp}")


def _build(cls, data, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown field(s) {sorted(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        sub = f"{path}.{f.name}" if path else f.name
        if f.name in data:
            kwargs[f.name] = _check_type(data[f.name], hints[f.name], sub)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"{sub}: required field missing")
    return cls(**kwargs)


def parse_config(text: str, validate: bool = True) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"YAML parse error at {where}: {exc.problem}") from None
    cfg = _build(ExperimentConfig, data, "")
    return cfg.validate() if validate else cfg


def load_config(path, validate: bool = True) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), validate)


# ---------------------------------------------------------------------------
# validation


def _positive(value, path):
    if value is not None and not value > 0:
        raise ConfigError(f"{path}: must be positive, got {value}")


def _validate(cfg: ExperimentConfig) -> None:
    p, g, o, s, m = cfg.prior, cfg.grid, cfg.observation, cfg.sampling, cfg.mcmc
    if p.dim not in (1, 2, 3):
        raise ConfigError(f"prior.dim: must be 1, 2 or 3, got {p.dim}")
    if p.basis not in ("haar", "fourier"):
        raise ConfigError(f"prior.basis: must be 'haar' or 'fourier', got {p.basis!r}")
    if p.q < 1:
        raise ConfigError(f"prior.q: must be >= 1, got {p.q}")
    for name in ("s", "kappa"):
        _positive(getattr(p, name), f"prior.{name}")
    for n in [g.n_per_axis] + list(g.n_list or []):
        if n < 1 or n & (n - 1):
            raise ConfigError(f"grid: n_per_axis values must be powers of two, got {n}")
    _positive(g.solver_tol, "grid.solver_tol")
    if cfg.experiment is Experiment.SOLVE_FORWARD or cfg.experiment in NEEDS_DATA:
        if p.dim == 3:
            raise ConfigError("prior.dim: the elliptic solver supports d in {1, 2}")
    if cfg.forcing.f not in ("manufactured", "zero"):
        raise ConfigError(f"forcing.f: unknown source {cfg.forcing.f!r}")
    if cfg.forcing.g not in ("zero", "sine"):
        raise ConfigError(f"forcing.g: unknown flux {cfg.forcing.g!r}")
    if cfg.forcing.u not in ("zero", "prior_draw"):
        raise ConfigError(f"forcing.u: unknown log-permeability {cfg.forcing.u!r}")
    _positive(o.sigma, "observation.sigma")
    if o.sigma is None and o.gamma is None:
        raise ConfigError("observation: give sigma or a dense gamma")
    if o.points is None and o.n_points is None:
        raise ConfigError("observation: give points or n_points")
    for name in ("N", "M"):
        _positive(getattr(s, name), f"sampling.{name}")
    _positive(s.N_ref, "sampling.N_ref")
    _positive(m.n_steps, "mcmc.n_steps")
    _positive(m.step_size, "mcmc.step_size")
    _positive(m.thin, "mcmc.thin")
    for name in ("alpha_list", "delta_list"):
        for v in getattr(cfg.lists, name) or []:
            if v < 0:
                raise ConfigError(f"lists.{name}: entries must be nonnegative, got {v}")

    threshold = p.s - p.dim / p.q
    if cfg.experiment in NEEDS_HOLDER:
        if s.t is None:
            raise ConfigError(f"sampling.t: required for {cfg.experiment.value}")
        if s.t >= threshold:
            raise ConfigError(
                f"sampling.t: need t < s - d/q = {threshold:g} for draws in C^t, got t={s.t}"
            )
        if p.basis == "haar" and s.t >= 1:
            raise ConfigError(f"sampling.t: Haar wavelets only support C^t claims for t < 1, got t={s.t}")
        if cfg.experiment is not Experiment.FERNIQUE_CHECK and s.t <= 0:
            raise ConfigError(f"sampling.t: must be positive, got {s.t}")
        if cfg.experiment is Experiment.FERNIQUE_CHECK and p.basis != "haar":
            raise ConfigError("prior.basis: the C^t coefficient norm needs a wavelet basis")
    if cfg.experiment is Experiment.TRUNCATION_CONVERGENCE:
        if not cfg.lists.N_list:
            raise ConfigError("lists.N_list: required for TruncationConvergence")
        if p.basis != "haar":
            raise ConfigError("prior.basis: truncation rates are stated for wavelet bases")
        n_ref = s.N_ref or s.N
        if max(cfg.lists.N_list) > n_ref:
            raise ConfigError(f"lists.N_list: entries must not exceed sampling.N_ref={n_ref}")
    if cfg.experiment is Experiment.PROP22_CHECK:
        if not cfg.lists.t_list or not cfg.lists.N_list:
            raise ConfigError("lists: Prop22Check needs t_list and N_list")
    if cfg.experiment is Experiment.DATA_LIPSCHITZ and not cfg.lists.delta_list:
        raise ConfigError("lists.delta_list: required for DataLipschitz")
    if cfg.experiment is Experiment.WEAK_ERRORS and not cfg.lists.N_list:
        raise ConfigError("lists.N_list: required for WeakErrors")
    _kappa_warning(cfg, threshold)


def _kappa_warning(cfg: ExperimentConfig, threshold: float) -> None:
    """Warn when kappa is below the sufficient threshold for well-posedness or approximation (q != 2)."""
    p = cfg.prior
    if p.q == 2 or threshold <= 0:
        return
    t = cfg.sampling.t if cfg.sampling.t is not None and 0 < cfg.sampling.t < threshold else 0.5 * threshold
    try:
        rstar = fernique_rstar(p.s, t, p.q, p.dim)
    except (ValueError, ArithmeticError):
        return
    if cfg.experiment in (Experiment.TRUNCATION_CONVERGENCE, Experiment.WEAK_ERRORS):
        need = kappa_star(0.0, 0.0, 4.0 + (4.0 + 2.0 * p.dim) / t, 1.0, rstar, Context.APPROXIMATION)
    elif cfg.experiment in (Experiment.DATA_LIPSCHITZ, Experiment.RUN_CHAIN):
        need = kappa_star(0.0, 1.0, 0.0, 1.0, rstar, Context.WELL_POSED)
    else:
        return
    if p.kappa <= need:
        warnings.warn(
            f"kappa={p.kappa} <= {need:.4g}: outside the sufficient condition for q != 2; proceeding",
            stacklevel=3,
        )
