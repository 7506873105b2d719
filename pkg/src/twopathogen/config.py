"""Run configuration: one TOML file with nested sections, overridable by flags."""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .data import OFFSET_BAND, ONSET_BAND
from .errors import ConfigError
from .inference import SamplerConfig
from .model import DEFAULT_MU, DEFAULT_N, DEFAULT_NU, DEFAULT_REGIME_TOL, DEFAULT_TOL, ModelParams
from .observation import THETA_NAMES, PriorSpec, ThetaVector


@dataclass
class PriorConfig:
    """Hyper-parameters of the default prior family plus per-coordinate overrides."""

    r0_1: float = 1.5
    r0_2: float = 1.5
    cv_rate: float = 0.5
    cross_r0: float | None = None
    cv_cross: float | None = None
    x0_mean: float = 0.1
    cv_x0: float = 1.0
    k_mean: float = 0.05
    cv_k: float = 0.5
    # {"beta1": {"shape": .., "rate": ..}, ...}; wins over the family above
    explicit: dict = field(default_factory=dict)

    def build(self, fixed: ModelParams) -> PriorSpec:
        kwargs = {k: v for k, v in dataclasses.asdict(self).items()
                  if k != "explicit" and v is not None}
        priors = PriorSpec.default(fixed, **kwargs)
        if not self.explicit:
            return priors
        unknown = set(self.explicit) - set(THETA_NAMES)
        if unknown:
            raise ConfigError(f"priors.explicit has unknown coordinates {sorted(unknown)}")
        shapes, rates = list(priors.shapes), list(priors.rates)
        for j, name in enumerate(THETA_NAMES):
            if name in self.explicit:
                entry = self.explicit[name]
                try:
                    shapes[j], rates[j] = float(entry["shape"]), float(entry["rate"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise ConfigError(f"priors.explicit.{name} needs shape and rate") from exc
        try:
            return PriorSpec(tuple(shapes), tuple(rates))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class RunConfig:
    seed: int = 0
    # fixed model parameters
    nu1: float = DEFAULT_NU
    nu2: float = DEFAULT_NU
    mu: float = DEFAULT_MU
    n_pop: float = DEFAULT_N
    # numerics
    tol: float = DEFAULT_TOL
    regime_rel_tol: float = DEFAULT_REGIME_TOL
    polish: bool = True
    # theta for simulate / synthesize
    theta: dict | None = None
    t_end: float = 210.0
    weeks: int = 30
    # sampler
    sampler: dict = field(default_factory=dict)
    chains: int = 1
    priors: PriorConfig = field(default_factory=PriorConfig)
    # season extraction
    onset_band: tuple = ONSET_BAND
    offset_band: tuple = OFFSET_BAND
    season_start_year: int | None = None
    exclude_years: tuple = ()
    exclude_self: bool = False
    baseline: str = "scalar"
    # paths
    data: str | None = None
    out: str = "runs"
    source: str | None = None

    def __post_init__(self):
        self.onset_band = _band(self.onset_band, "onset_band")
        self.offset_band = _band(self.offset_band, "offset_band")
        self.exclude_years = tuple(int(y) for y in self.exclude_years)
        if self.baseline not in ("scalar", "per_week"):
            raise ConfigError("baseline must be 'scalar' or 'per_week'")
        if self.chains < 1:
            raise ConfigError("chains must be >= 1")
        if not self.tol > 0 or not self.regime_rel_tol > 0:
            raise ConfigError("tolerances must be positive")
        if self.weeks < 4:
            raise ConfigError("weeks must be >= 4")
        self.fixed_params()
        self.sampler_config()
        self.prior_spec()
        if self.theta is not None:
            self.theta_vector()

    def fixed_params(self) -> ModelParams:
        try:
            return ModelParams(0.0, 0.0, nu1=self.nu1, nu2=self.nu2, mu=self.mu, n_pop=self.n_pop)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def sampler_config(self) -> SamplerConfig:
        opts = dict(self.sampler)
        if "move_weights" in opts:
            opts["move_weights"] = tuple(opts["move_weights"])
        try:
            return SamplerConfig(seed=self.seed, **opts)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"sampler: {exc}") from exc

    def prior_spec(self) -> PriorSpec:
        try:
            return self.priors.build(self.fixed_params())
        except ValueError as exc:
            raise ConfigError(f"priors: {exc}") from exc

    def theta_vector(self) -> ThetaVector:
        if self.theta is None:
            raise ConfigError("this command needs a [theta] section")
        try:
            return ThetaVector.from_mapping(self.theta)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"theta: {exc}") from exc

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["onset_band"] = [list(p) for p in self.onset_band]
        d["offset_band"] = [list(p) for p in self.offset_band]
        d["exclude_years"] = list(self.exclude_years)
        return d

    def dumps(self) -> str:
        """Effective configuration as canonical JSON."""
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def _band(value, name):
    try:
        (m0, d0), (m1, d1) = value
        return ((int(m0), int(d0)), (int(m1), int(d1)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be [[month, day], [month, day]]") from exc


_SECTIONS = {
    "model": ("nu1", "nu2", "mu", "n_pop"),
    "numerics": ("tol", "regime_rel_tol", "polish"),
    "simulate": ("t_end", "weeks"),
    "season": ("onset_band", "offset_band", "season_start_year", "exclude_years", "exclude_self",
               "baseline"),
    "paths": ("data", "out"),
}


def from_mapping(raw: dict, source: str | None = None) -> RunConfig:
    """Build a config from parsed TOML; unknown keys are errors."""
    raw = dict(raw)
    kwargs = {"source": source}
    if "seed" in raw:
        kwargs["seed"] = raw.pop("seed")
    for section, keys in _SECTIONS.items():
        body = raw.pop(section, {})
        extra = set(body) - set(keys)
        if extra:
            raise ConfigError(f"[{section}] has unknown keys {sorted(extra)}")
        kwargs.update(body)
    if "theta" in raw:
        kwargs["theta"] = raw.pop("theta")
    if "sampler" in raw:
        sampler = dict(raw.pop("sampler"))
        if "chains" in sampler:
            kwargs["chains"] = sampler.pop("chains")
        kwargs["sampler"] = sampler
    if "priors" in raw:
        body = dict(raw.pop("priors"))
        fields_ = {f.name for f in dataclasses.fields(PriorConfig)}
        extra = set(body) - fields_
        if extra:
            raise ConfigError(f"[priors] has unknown keys {sorted(extra)}")
        kwargs["priors"] = PriorConfig(**body)
    if raw:
        raise ConfigError(f"unknown top-level keys {sorted(raw)}")
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None) -> RunConfig:
    """Parse a TOML config; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_mapping(raw, source=str(path))
