"""Physical constants, particle/gas specifications and reference-mass policies.

Everything in SI units. Rates are angular (1/s) internally; linewidths in Hz
only appear at I/O boundaries (see ``RatePrediction.linewidth_hz``).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

from scipy import constants as _sc


class ValidationError(ValueError):
    """Raised when an input parameter is outside its allowed domain."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _require_positive(name: str, value: float) -> float:
    value = float(value)
    if not value > 0 or math.isnan(value):
        raise ValidationError(name, f"must be > 0, got {value!r}")
    return value


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA constants used by every formula in the package.

    Instances are immutable; use :meth:`with_overrides` to get a modified copy
    (e.g. to evaluate formulas in a rescaled unit system).
    """

    hbar: float = _sc.hbar
    k_B: float = _sc.k
    G: float = _sc.G
    c: float = _sc.c
    g: float = _sc.g
    mu_0: float = _sc.mu_0
    m_nucleon: float = _sc.m_n
    atomic_mass_unit: float = _sc.atomic_mass

    def __post_init__(self):
        for f in fields(self):
            _require_positive(f.name, getattr(self, f.name))

    def with_overrides(self, **overrides: float) -> "PhysicalConstants":
        return replace(self, **overrides)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PhysicalConstants":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError("constants", f"unknown keys {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})


CODATA = PhysicalConstants()

# helium-4 atomic mass, in units of u
HELIUM_MASS_U = 4.002602
DEFAULT_NUCLEAR_MASS_U = 100.0


@dataclass(frozen=True)
class SphereSpec:
    """Homogeneous sphere; mass and volume are derived from radius and density."""

    radius: float
    density: float
    saturation_field: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "radius", _require_positive("radius", self.radius))
        object.__setattr__(self, "density", _require_positive("density", self.density))
        if self.saturation_field is not None:
            object.__setattr__(self, "saturation_field",
                               _require_positive("saturation_field", self.saturation_field))

    @property
    def volume(self) -> float:
        return 4.0 * math.pi / 3.0 * self.radius**3

    @property
    def mass(self) -> float:
        return 4.0 * math.pi / 3.0 * self.density * self.radius**3

    def to_dict(self) -> dict:
        return {"radius": self.radius, "density": self.density,
                "saturation_field": self.saturation_field}


def make_sphere(radius: float, density: float,
                saturation_field: Optional[float] = None) -> SphereSpec:
    return SphereSpec(radius, density, saturation_field)


# The levitated NdFeB micromagnet used throughout the examples and acceptance runs.
MICROMAGNET = SphereSpec(radius=27e-6, density=7.4e3, saturation_field=0.7)


@dataclass(frozen=True)
class GasSpec:
    """Residual gas: molecular mass, temperature at the particle, and gauge temperature."""

    molecular_mass: float = HELIUM_MASS_U * _sc.atomic_mass
    temperature: float = 4.2
    gauge_temperature: float = 300.0

    def __post_init__(self):
        for name in ("molecular_mass", "temperature", "gauge_temperature"):
            _require_positive(name, getattr(self, name))
        if self.temperature > self.gauge_temperature:
            raise ValidationError("temperature", "must not exceed gauge_temperature")


@dataclass(frozen=True)
class RatePrediction:
    """Position-diffusion coefficient ``eta`` (1/(m^2 s)) and energy damping rate ``gamma`` (1/s)."""

    eta: float
    gamma: float
    chi: float = 0.0
    warnings: tuple = field(default=())

    @property
    def linewidth_hz(self) -> float:
        return self.gamma / (2.0 * math.pi)


@dataclass(frozen=True)
class MassPolicy:
    """Choice of the reference mass m_a entering the dissipation parameter.

    ``nucleon``            -- the nucleon mass
    ``fixed_nuclear``      -- a fixed nuclear mass (default 100 u)
    ``sphere_of_R0prime``  -- mass of a sphere of radius R0' = R0 (1 + chi) and the given density
    """

    kind: str
    mass: Optional[float] = None
    density: Optional[float] = None

    KINDS = ("nucleon", "fixed_nuclear", "sphere_of_R0prime")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValidationError("mass_policy", f"unknown kind {self.kind!r}")
        if self.kind == "fixed_nuclear":
            mass = self.mass if self.mass is not None else DEFAULT_NUCLEAR_MASS_U * _sc.atomic_mass
            object.__setattr__(self, "mass", _require_positive("mass", mass))
        if self.kind == "sphere_of_R0prime":
            if self.density is None:
                raise ValidationError("density", "required for sphere_of_R0prime policy")
            object.__setattr__(self, "density", _require_positive("density", self.density))

    @classmethod
    def nucleon(cls) -> "MassPolicy":
        return cls("nucleon")

    @classmethod
    def fixed_nuclear(cls, mass: Optional[float] = None) -> "MassPolicy":
        return cls("fixed_nuclear", mass=mass)

    @classmethod
    def sphere_of_R0prime(cls, density: float) -> "MassPolicy":
        return cls("sphere_of_R0prime", density=density)

    @property
    def self_consistent(self) -> bool:
        return self.kind == "sphere_of_R0prime"

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.mass is not None:
            out["mass"] = self.mass
        if self.density is not None:
            out["density"] = self.density
        return out


def reference_mass(policy: MassPolicy, R0prime: Optional[float] = None,
                   constants: PhysicalConstants = CODATA) -> float:
    """Return m_a for ``policy``; the sphere policy needs the effective radius R0'."""
    if policy.kind == "nucleon":
        return constants.m_nucleon
    if policy.kind == "fixed_nuclear":
        return policy.mass
    if R0prime is None:
        raise ValidationError("R0prime", "required for sphere_of_R0prime policy")
    R0prime = _require_positive("R0prime", R0prime)
    return 4.0 * math.pi / 3.0 * policy.density * R0prime**3


class NumericalError(ArithmeticError):
    """A numerical procedure failed to converge or exceeded its budget."""


class RegimeWarning(UserWarning):
    """A closed form is being used outside the regime it was derived for."""
