"""Experiment configuration: dataclasses plus strict TOML loading.

The file format is TOML (key/value with nested tables).  Loading is
strict: unknown keys raise ConfigError with the offending path, so typos
cannot silently fall back to defaults.  Every pass/fail threshold used
by the experiment drivers lives in the [tolerances] table; the CLI's
--tolerance-scale multiplies all of them uniformly at evaluation time.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from ..tensor import Box

SPACETIME_KINDS = ("flat", "harmonic", "point_mass", "uniform")


class ConfigError(ValueError):
    """Malformed experiment configuration."""


def _vector4(value, where: str) -> tuple[float, float, float, float]:
    try:
        vec = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a list of four numbers") from None
    if len(vec) != 4:
        raise ConfigError(f"{where} must have exactly four entries")
    return vec


@dataclass(frozen=True)
class SpacetimeSpec:
    """Which geometry the experiments run on.

    kind 'flat' is the plain adapted chart; the other kinds name a
    potential whose geometrization supplies the curved operator.
    strength is the single model parameter (source mass, trap stiffness,
    or uniform pull).  The working region is the centered box of the
    given half-width, minus an optional excluded ball around the spatial
    origin (required for point sources).
    """

    kind: str = "flat"
    strength: float = 1.0
    extent: float = 2.0
    exclude_radius: float = -1.0  # -1: per-kind default

    def __post_init__(self):
        if self.kind not in SPACETIME_KINDS:
            raise ConfigError(
                f"spacetime.kind must be one of {SPACETIME_KINDS}, got {self.kind!r}")
        if self.extent <= 0:
            raise ConfigError("spacetime.extent must be positive")

    def ball(self) -> float:
        if self.exclude_radius >= 0:
            return self.exclude_radius
        return 0.3 if self.kind == "point_mass" else 0.0

    def box(self) -> Box:
        e = float(self.extent)
        return Box([-e] * 4, [e] * 4, exclude_radius=self.ball())


@dataclass(frozen=True)
class BodySpec:
    """Dust-body family: central curve initial data plus support radii.

    The same curve parameters drive both regimes: experiments that need a
    flat-space body integrate the curve with the flat operator, curved
    ones with the geometrized operator.  radii must be strictly
    decreasing (convergence sweeps iterate them largest first).
    leak_rate deliberately breaks conservation for defect fixtures.
    """

    event: tuple = (-0.5, 0.0, 0.0, 0.0)
    velocity: tuple = (1.0, 0.0, 0.0, 0.0)
    radii: tuple = (0.2,)
    window: float = 1.0
    nodes_across: int = 24
    ode_tol: float = 1e-10
    leak_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "event", _vector4(self.event, "body.event"))
        object.__setattr__(self, "velocity", _vector4(self.velocity, "body.velocity"))
        try:
            radii = tuple(float(r) for r in self.radii)
        except (TypeError, ValueError):
            raise ConfigError("body.radii must be a list of numbers") from None
        if not radii or any(r <= 0 for r in radii):
            raise ConfigError("body.radii must be positive")
        if any(b >= a for a, b in zip(radii, radii[1:])):
            raise ConfigError("body.radii must be strictly decreasing")
        object.__setattr__(self, "radii", radii)
        if self.window <= 0:
            raise ConfigError("body.window must be positive")
        if self.nodes_across < 8:
            raise ConfigError("body.nodes_across must be at least 8")
        if self.ode_tol <= 0:
            raise ConfigError("body.ode_tol must be positive")


@dataclass(frozen=True)
class SlicePlan:
    """How many probe slices to take and how much of the window to trim
    at each end (spline edges of the stored body are the noisiest)."""

    count: int = 5
    margin: float = 0.08

    def __post_init__(self):
        if self.count < 2:
            raise ConfigError("slices.count must be at least 2")
        if not 0.0 <= self.margin < 0.5:
            raise ConfigError("slices.margin must lie in [0, 0.5)")


@dataclass(frozen=True)
class EquivalenceSpec:
    """Random initial conditions for the free-fall/forced comparison."""

    count: int = 20
    duration: float = 1.0
    ode_tol: float = 1e-8
    speed: float = 0.4
    seed: int = 2026

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError("equivalence.count must be at least 1")
        if self.duration <= 0 or self.ode_tol <= 0 or self.speed <= 0:
            raise ConfigError("equivalence duration, ode_tol and speed must be positive")


@dataclass(frozen=True)
class Tolerances:
    """Every pass/fail threshold the report tables can emit.

    All values must be positive; sanity runs that want everything to fail
    use the run-level tolerance scale (which may be zero) rather than
    zeroed entries here.
    """

    momentum_invariance: float = 1e-4
    momentum_constancy: float = 1e-4
    angular_invariance: float = 1e-4
    angular_derivative: float = 1e-4
    com_uniqueness: float = 1e-6
    frame_agreement: float = 1e-6
    mass_invariance: float = 1e-3
    recovery_potential: float = 1e-6
    recovery_operator: float = 1e-8
    equivalence_factor: float = 10.0
    geodesic_sanity: float = 1e-6
    stokes_identity: float = 1e-9
    quadrature: float = 1e-4
    first_law_residual: float = 1e-4
    first_law_angle: float = 1e-4
    compatibility: float = 1e-6
    curvature_source: float = 1e-6

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) <= 0:
                raise ConfigError(f"tolerances.{f.name} must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one experiment run."""

    spacetime: SpacetimeSpec = field(default_factory=SpacetimeSpec)
    body: BodySpec = field(default_factory=BodySpec)
    slices: SlicePlan = field(default_factory=SlicePlan)
    equivalence: EquivalenceSpec = field(default_factory=EquivalenceSpec)
    tolerances: Tolerances = field(default_factory=Tolerances)
    out_dir: Path = Path("out")
    threads: int = 1
    tolerance_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.tolerance_scale < 0:
            raise ConfigError("tolerance-scale must be nonnegative")

    def threshold(self, name: str) -> float:
        """A named tolerance after applying the run-level scale."""
        return float(getattr(self.tolerances, name)) * self.tolerance_scale

    def replace(self, **kwargs) -> "ExperimentConfig":
        return dataclasses.replace(self, **kwargs)


_SECTION_TYPES = {
    "spacetime": SpacetimeSpec,
    "body": BodySpec,
    "slices": SlicePlan,
    "equivalence": EquivalenceSpec,
    "tolerances": Tolerances,
}
_OUTPUT_KEYS = {"dir", "threads"}


def _build_section(cls, table: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ConfigError(f"unknown key {where}.{sorted(unknown)[0]}")
    for key, value in table.items():
        if isinstance(value, dict):
            raise ConfigError(f"{where}.{key} must be a value, not a table")
    return cls(**table)


def parse_config(data: dict, *, out_dir=None, threads=None,
                 tolerance_scale=None) -> ExperimentConfig:
    """Build a validated config from a parsed TOML mapping.

    Keyword arguments are CLI overrides and win over the file contents.
    """
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a table")
    unknown = set(data) - set(_SECTION_TYPES) - {"output"}
    if unknown:
        raise ConfigError(f"unknown table [{sorted(unknown)[0]}]")

    sections = {}
    for name, cls in _SECTION_TYPES.items():
        table = data.get(name, {})
        if not isinstance(table, dict):
            raise ConfigError(f"[{name}] must be a table")
        sections[name] = _build_section(cls, table, name)

    output = data.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("[output] must be a table")
    unknown = set(output) - _OUTPUT_KEYS
    if unknown:
        raise ConfigError(f"unknown key output.{sorted(unknown)[0]}")

    return ExperimentConfig(
        spacetime=sections["spacetime"],
        body=sections["body"],
        slices=sections["slices"],
        equivalence=sections["equivalence"],
        tolerances=sections["tolerances"],
        out_dir=Path(out_dir if out_dir is not None else output.get("dir", "out")),
        threads=int(threads if threads is not None else output.get("threads", 1)),
        tolerance_scale=float(tolerance_scale if tolerance_scale is not None else 1.0),
    )


def load_config(path, *, out_dir=None, threads=None,
                tolerance_scale=None) -> ExperimentConfig:
    """Parse and validate a TOML experiment configuration file."""
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"{path}: {err}") from None
    return parse_config(data, out_dir=out_dir, threads=threads,
                        tolerance_scale=tolerance_scale)
