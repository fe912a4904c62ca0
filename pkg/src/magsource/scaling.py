"""Physical parameters, derived scales and the dimensionless problem.

Everything downstream works with the single energy parameter ``epsilon``
and scaled cylindrical coordinates measured in units of the maximal
cyclotron-orbit diameter ``v0 / omega_L``.  Physical units only enter when
labelling outputs.
"""

from dataclasses import dataclass
import math

from scipy import constants

from .errors import InvalidParameterError

HBAR = constants.hbar


@dataclass(frozen=True)
class PhysicalParams:
    """Charge (C), mass (kg), magnetic field (T) and kinetic energy (J).

    A negative charge is accepted; only its magnitude matters for fields.
    """

    charge: float
    mass: float
    field: float
    energy: float


@dataclass(frozen=True)
class ScaledPoint:
    rho: float
    z: float

    def __post_init__(self):
        if not self.rho >= 0:
            raise InvalidParameterError(f"scaled radius must be >= 0, got {self.rho}")


@dataclass(frozen=True)
class ScalingContext:
    larmor: float          # omega_L, rad/s
    speed: float           # v0, m/s
    wavenumber: float      # k, 1/m
    epsilon: float
    length_unit: float     # v0 / omega_L, m
    density_unit: float    # [m k / (4 pi eps hbar^2)]^2
    current_unit: float    # m k^3 / (16 pi^2 eps^2 hbar^3)
    free_current: float    # J_free = m k / (pi hbar^3)


def build_context(p: PhysicalParams) -> ScalingContext:
    q = abs(p.charge)
    for name, value in (("charge", q), ("mass", p.mass), ("field", p.field), ("energy", p.energy)):
        if not (value > 0 and math.isfinite(value)):
            raise InvalidParameterError(f"{name} must be positive and finite, got {value!r}")
    larmor = q * p.field / (2.0 * p.mass)
    speed = math.sqrt(2.0 * p.energy / p.mass)
    k = p.mass * speed / HBAR
    eps = p.energy / (HBAR * larmor)
    length = speed / larmor
    density = (p.mass * k / (4.0 * math.pi * eps * HBAR**2)) ** 2
    current = p.mass * k**3 / (16.0 * math.pi**2 * eps**2 * HBAR**3)
    jfree = p.mass * k / (math.pi * HBAR**3)
    return ScalingContext(larmor, speed, k, eps, length, density, current, jfree)


def params_for_epsilon(epsilon, charge=constants.e, mass=constants.m_e, field=1.0):
    """Physical parameter set realising a given ``epsilon`` (electron in 1 T by default)."""
    larmor = abs(charge) * field / (2.0 * mass)
    return PhysicalParams(charge, mass, field, epsilon * HBAR * larmor)


def to_scaled(rho, z, ctx: ScalingContext) -> ScaledPoint:
    return ScaledPoint(rho / ctx.length_unit, z / ctx.length_unit)


def from_scaled(p: ScaledPoint, ctx: ScalingContext):
    """Inverse of :func:`to_scaled`; returns ``(rho, z)`` in metres."""
    return p.rho * ctx.length_unit, p.z * ctx.length_unit
