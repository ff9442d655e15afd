"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Vectors are comma separated.
Unknown keys are rejected so typos do not pass silently.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .grid import Box3, Grid3D, PlaneSpec, WavenumberGrid
from .inversion import SCHEMES, InversionConfig
from .medium import CASES, Inclusion


class ConfigError(ValueError):
    pass


def _floats(s: str, n: int) -> tuple:
    parts = [p.strip() for p in s.split(",")]
    if len(parts) != n:
        raise ConfigError(f"expected {n} comma-separated values, got {s!r}")
    return tuple(float(p) for p in parts)


def _ints(s: str, n: int) -> tuple:
    return tuple(int(round(v)) for v in _floats(s, n))


@dataclass(frozen=True)
class PipelineConfig:
    case: int = 1
    omega_lo: tuple = (-2.5, -2.5, -4.0)
    omega_hi: tuple = (2.5, 2.5, 1.0)
    omega_n: tuple = (51, 51, 51)
    meas_half_width: float = 5.0
    meas_x3: float = 2.5
    meas_n: int = 100
    prop_x3: float = 1.0
    prop_n: int = 101
    gamma_half_width: float = 2.5
    k_lo: float = 80.0
    k_hi: float = 85.0
    k_steps: int = 50
    shift_k_lo: float = 20.4
    shift_k_hi: float = 21.0
    shift_steps: int = 6
    noise_level: float = 0.05
    seed: int = 0
    eps: float = 0.03
    forward_tol: float = 1e-8
    forward_max_iter: int = 2000
    sim_points_per_wavelength: float = 6.0
    propagation_pad: int = 2
    inner_iterations: int = 3
    c_max: float = 10.0
    buffer: int = 2
    tol_stop: float = 1e-3
    q_tol: float = 1e-8
    q_boundary: str = "log"
    scheme: str = "centered"
    support_threshold: float = 1.2
    out_dir: str = "out"

    def __post_init__(self):
        if self.case not in CASES:
            raise ConfigError(f"case must be one of {sorted(CASES)}")
        if self.shift_k_hi >= self.k_hi:
            raise ConfigError("shifted interval must lie below the acquisition interval")
        if not 0 < self.prop_x3 < self.meas_x3:
            raise ConfigError("need 0 < prop_x3 < meas_x3")
        if abs(self.prop_x3 - self.omega_hi[2]) > 1e-12:
            raise ConfigError("prop_x3 must be the top face of the domain")
        g = self.gamma_half_width
        if any(abs(abs(v) - g) > 1e-12 for v in (*self.omega_lo[:2], *self.omega_hi[:2])):
            raise ConfigError("gamma_half_width must match the lateral extent of the domain")
        if g > self.meas_half_width:
            raise ConfigError("the top face must fit inside the propagated square")
        if self.noise_level < 0 or self.eps <= 0:
            raise ConfigError("noise_level must be >= 0 and eps > 0")
        if self.q_boundary not in ("log", "ratio") or self.scheme not in SCHEMES:
            raise ConfigError("q_boundary must be log|ratio and scheme centered|upwind")
        try:
            self.domain_grid()
            self.acquisition_kgrid()
            self.shifted_kgrid()
            self.meas_plane()
            self.prop_plane()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # derived objects
    def domain_grid(self) -> Grid3D:
        return Grid3D(Box3(self.omega_lo, self.omega_hi), self.omega_n)

    def meas_plane(self) -> PlaneSpec:
        return PlaneSpec(self.meas_half_width, self.meas_x3, self.meas_n)

    def prop_plane(self) -> PlaneSpec:
        return PlaneSpec(self.meas_half_width, self.prop_x3, self.prop_n)

    def acquisition_kgrid(self) -> WavenumberGrid:
        return WavenumberGrid(self.k_lo, self.k_hi, self.k_steps)

    def shifted_kgrid(self) -> WavenumberGrid:
        return WavenumberGrid(self.shift_k_lo, self.shift_k_hi, self.shift_steps)

    def inclusions(self) -> tuple[Inclusion, ...]:
        return CASES[self.case]

    def inversion(self) -> InversionConfig:
        return InversionConfig(inner_iterations=self.inner_iterations, c_max=self.c_max,
                               buffer=self.buffer, tol_stop=self.tol_stop, q_tol=self.q_tol,
                               scheme=self.scheme, q_boundary=self.q_boundary,
                               forward_tol=self.forward_tol,
                               forward_max_iter=self.forward_max_iter)

    def with_overrides(self, **kw) -> "PipelineConfig":
        return replace(self, **kw)


def _coerce(name: str, raw: str, default):
    try:
        if isinstance(default, tuple):
            return _ints(raw, len(default)) if isinstance(default[0], int) else _floats(raw, len(default))
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_config(text: str) -> PipelineConfig:
    defaults = PipelineConfig()
    known = {f.name: getattr(defaults, f.name) for f in fields(PipelineConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw, known[key])
    return PipelineConfig(**values)


def load_config(path) -> PipelineConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in fields(PipelineConfig):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {','.join(map(str, v)) if isinstance(v, tuple) else v}")
    return "\n".join(lines) + "\n"
