"""Run configuration: a fixed JSON schema with strict key checking."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConditionViolated, ConfigError, DomainError, NoRoot
from .minkowski import PhiFamily
from .scenarios import SCENARIOS, ScenarioParams

SCHEMA_VERSION = 1
FAMILIES = ("riemannian", "randers", "kropina", "generalized_kropina")
PRESCAN_RESOLUTION = 8

# analytically constant scenarios are held to the quadrature floor
CONSTANT_SCENARIOS = ("S1", "S2")


@dataclass(frozen=True)
class Tolerances:
    residual: float | None = None
    oracle_gap: float | None = None
    display_gap: float = 1e-9
    order_min: float = 1.8
    atol: float = 1e-12

    def resolved(self, scenario: str, family: str) -> "Tolerances":
        const = scenario in CONSTANT_SCENARIOS
        residual = self.residual
        if residual is None:
            residual = 1e-9 if const else 1e-4
            if family in ("kropina", "generalized_kropina") and not const:
                residual *= 2.0
        oracle_gap = self.oracle_gap
        if oracle_gap is None:
            oracle_gap = 1e-9 if const else 5e-3
        return replace(self, residual=residual, oracle_gap=oracle_gap)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "S1"
    family: str = "randers"
    l: float | None = None
    dim: int = 3
    resolution: int = 64
    resolutions: tuple[int, ...] = (32, 64, 128)
    epsilon: float = 0.2
    epsilon_prime: float = 0.2
    modulation: float | None = None
    warp: float = 0.1
    tilt: float = 0.1
    shear: float = 0.1
    tolerances: Tolerances = field(default_factory=Tolerances)
    output: str | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {sorted(SCENARIOS)}")
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; choose from {list(FAMILIES)}")
        if self.family == "generalized_kropina":
            if self.l is None or not self.l > 0:
                raise ConfigError("generalized_kropina needs a positive 'l'")
        elif self.l is not None:
            raise ConfigError(f"'l' only applies to generalized_kropina, not {self.family}")
        if self.dim not in (3, 4):
            raise ConfigError(f"dim must be 3 or 4, got {self.dim}")
        _check_resolution(self.resolution)
        if len(self.resolutions) < 2:
            raise ConfigError("a convergence study needs at least two resolutions")
        for r in self.resolutions:
            _check_resolution(r)
        if list(self.resolutions) != sorted(set(self.resolutions)):
            raise ConfigError("resolutions must be strictly increasing")
        for name in ("epsilon", "epsilon_prime", "warp", "tilt", "shear"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or value != value:
                raise ConfigError(f"{name} must be a number")
        if self.modulation is not None and abs(self.modulation) >= 1.0:
            raise ConfigError("modulation amplitude must lie in (-1, 1)")

    @property
    def phi_family(self) -> PhiFamily:
        if self.family == "generalized_kropina":
            return PhiFamily.generalized_kropina(float(self.l))
        return PhiFamily.coerce(self.family)

    @property
    def params(self) -> ScenarioParams:
        return ScenarioParams(epsilon=self.epsilon, epsilon_prime=self.epsilon_prime,
                              modulation=self.modulation, warp=self.warp, tilt=self.tilt,
                              shear=self.shear)

    @property
    def tol(self) -> Tolerances:
        return self.tolerances.resolved(self.scenario, self.family)

    def with_resolution(self, resolution: int) -> "ScenarioConfig":
        return replace(self, resolution=int(resolution))

    def to_dict(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION, **asdict(self)}
        out["resolutions"] = list(self.resolutions)
        out["tolerances"] = asdict(self.tolerances)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        data = dict(data)
        version = data.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        _reject_unknown(data, {f.name for f in fields(cls)}, "config")
        tol = data.get("tolerances", {})
        if not isinstance(tol, dict):
            raise ConfigError("'tolerances' must be an object")
        _reject_unknown(tol, {f.name for f in fields(Tolerances)}, "tolerances")
        data["tolerances"] = Tolerances(**tol)
        if "resolutions" in data:
            data["resolutions"] = tuple(int(r) for r in data["resolutions"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_json(text)


def _check_resolution(r) -> None:
    if not isinstance(r, int) or isinstance(r, bool) or r < 8:
        raise ConfigError(f"resolution must be an integer >= 8, got {r!r}")


def _reject_unknown(data: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {', '.join(unknown)}")


def prescan(config: ScenarioConfig) -> dict:
    """Solve the normal equation on a coarse grid before any fine field is built.

    Returns the minimum condition margins; raises :class:`ConfigError` when the
    parameters leave the admissible region anywhere on the coarse grid.
    """
    from .leaf_operators import FrameField
    from .manifold import ChartGrid

    grid = ChartGrid(config.dim, PRESCAN_RESOLUTION)
    geo = SCENARIOS[config.scenario].geometry(grid, config.params)
    try:
        ff = FrameField(geo, config.phi_family)
    except (ConditionViolated, DomainError, NoRoot) as exc:
        raise ConfigError(f"parameters violate the admissibility conditions: {exc}") from exc
    return ff.margins()
