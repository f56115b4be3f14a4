"""Run configuration: a flat TOML table, validated on load, with unknown keys rejected."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..integrator import METHODS, IntegratorConfig, default_output_times
from ..mesh import build_mesh
from ..model import ModelSpec
from ..spatial import FLUX_SCHEMES

# key -> comment written next to it (units where they apply)
_COMMENTS = {
    "name": "run label, used as the output sub-directory",
    "kind": "switching | symmetric | classical",
    "alpha": "switching rate u -> w [1/time]",
    "beta": "switching rate w -> u [1/time]",
    "gamma": "symmetric switching rate [1/time]",
    "rho": "initial total density [mass/volume]",
    "dim": "spatial dimension n (1, 2 or 3)",
    "R": "domain radius [length]",
    "N": "number of mesh cells",
    "flux": "chemotactic face flux: central | upwind | sg (exponential fitting)",
    "t_end": "final time [time]",
    "rtol": "relative local error tolerance",
    "atol": "absolute local error tolerance [density]",
    "dt_init": "first trial step [time]",
    "dt_min": "smallest admissible step; below it the run is a blow-up [time]",
    "dt_max": "largest step, 0 means t_end/10 [time]",
    "max_density_cap": "population density treated as blow-up [density]",
    "steady_window": "window for the steady-state test [time]",
    "steady_tol": "relative rate of change regarded as steady [1/time]",
    "n_samples": "log-spaced output samples after t_first_sample",
    "t_first_sample": "first log-spaced sample time [time]",
    "method": "sdirk4 | trbdf2",
    "output_dir": "directory receiving run folders",
}

SWEEP_AXES = ("gamma", "alpha", "beta", "rho", "N")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    name: str = "run"
    kind: str = "symmetric"
    alpha: Optional[float] = None
    beta: Optional[float] = None
    gamma: Optional[float] = 10.0
    rho: float = 6.0
    dim: int = 1
    R: float = 10.0
    N: int = 10_000
    flux: str = "central"
    t_end: float = 5000.0
    rtol: float = 1e-6
    atol: float = 1e-9
    dt_init: float = 1e-6
    dt_min: float = 1e-13
    dt_max: float = 0.0
    max_density_cap: float = 1e30
    steady_window: float = 10.0
    steady_tol: float = 1e-8
    n_samples: int = 500
    t_first_sample: float = 1e-3
    method: str = "sdirk4"
    output_dir: str = "runs"

    def __post_init__(self):
        self.validate()

    # -- derived objects -----------------------------------------------------

    def model(self) -> ModelSpec:
        return ModelSpec.from_dict({"kind": self.kind, "alpha": self.alpha,
                                    "beta": self.beta, "gamma": self.gamma})

    def mesh(self):
        return build_mesh(self.dim, self.R, self.N)

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(
            t_end=self.t_end, rtol=self.rtol, atol=self.atol, dt_init=self.dt_init,
            dt_min=self.dt_min, dt_max=self.dt_max or None,
            max_density_cap=self.max_density_cap,
            output_times=default_output_times(self.t_end, self.n_samples, self.t_first_sample),
            steady_window=self.steady_window, steady_tol=self.steady_tol, method=self.method,
        )

    def validate(self) -> None:
        try:
            self.model()
            if self.dim not in (1, 2, 3):
                raise ValueError(f"dim must be 1, 2 or 3, got {self.dim!r}")
            if not (self.R > 0 and math.isfinite(self.R)):
                raise ValueError(f"R must be positive, got {self.R!r}")
            if int(self.N) != self.N or self.N < 8:
                raise ValueError(f"N must be an integer >= 8, got {self.N!r}")
            if not self.rho > 0:
                raise ValueError(f"rho must be positive, got {self.rho!r}")
            if self.n_samples < 1:
                raise ValueError("n_samples must be at least 1")
            if self.flux not in FLUX_SCHEMES:
                raise ValueError(f"unknown flux scheme {self.flux!r}; choose from {FLUX_SCHEMES}")
            if self.method not in METHODS:
                raise ValueError(f"unknown method {self.method!r}")
            if not self.name or "/" in self.name:
                raise ValueError(f"invalid run name {self.name!r}")
            IntegratorConfig(
                t_end=self.t_end, rtol=self.rtol, atol=self.atol, dt_init=self.dt_init,
                dt_min=self.dt_min, dt_max=self.dt_max or None,
                max_density_cap=self.max_density_cap,
                steady_window=self.steady_window, steady_tol=self.steady_tol,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # -- (de)serialisation ---------------------------------------------------

    def to_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kw = dict(d)
        # a spec kind only carries its own rates; don't inherit the default gamma
        if "kind" in kw and kw["kind"] != "symmetric" and "gamma" not in kw:
            kw["gamma"] = None
        for key, value in list(kw.items()):
            kw[key] = _coerce(known[key], value)
        return cls(**kw)

    def replace(self, **changes) -> "RunConfig":
        d = self.to_dict()
        if "kind" in changes:
            # rates belong to the old kind unless restated
            for k in ("alpha", "beta", "gamma"):
                d.pop(k, None)
        d.update(changes)
        return RunConfig.from_dict(d)

    def dumps(self) -> str:
        lines = []
        for key, value in self.to_dict().items():
            lines.append(f"{key} = {_toml_value(value)}  # {_COMMENTS[key]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config is not valid TOML: {exc}") from None
        nested = [k for k, v in data.items() if isinstance(v, (dict, list))]
        if nested:
            raise ConfigError(f"config must be flat; offending keys: {', '.join(nested)}")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.loads(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    def with_overrides(self, assignments) -> "RunConfig":
        """Apply ``key=value`` strings (values parsed as TOML scalars, bare words as strings)."""
        changes = {}
        for item in assignments:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            key, raw = (s.strip() for s in item.split("=", 1))
            try:
                value = tomllib.loads(f"x = {raw}")["x"]
            except tomllib.TOMLDecodeError:
                value = raw
            changes[key] = value
        return self.replace(**changes)


def _coerce(f, value):
    if value is None:
        return None
    target = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if "int" in target:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if "float" in target:
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {f.name}: {value!r}") from None


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = repr(value)
        if text in ("inf", "-inf", "nan"):
            return text
        return text if any(c in text for c in ".en") else text + ".0"
    return '"' + str(value).replace("\\", "\\\\").replace('"', '\\"') + '"'
