"""Classical cyclotron orbits from the source to a destination.

Times of flight are written as ``tau = nu*pi + x`` with the cyclotron
interval ``nu`` and the local offset ``0 < x < pi``.  Working with ``x``
keeps trigonometric functions accurate for tens of thousands of orbits,
because ``sin(tau)**2 = sin(x)**2`` and ``cot(tau) = cot(x)``.
"""

from dataclasses import dataclass
from enum import Enum
import math

import numpy as np
from scipy.optimize import brentq

from .errors import CausticDivergence, DomainError, NotApplicableError
from .scaling import ScaledPoint

CAUSTIC_TOL = 1e-9
PI = math.pi


class Kind(Enum):
    FAST = "fast"
    SLOW = "slow"
    GHOST = "ghost"


@dataclass(frozen=True)
class TrajectorySolution:
    tau: complex
    nu: int
    kind: Kind
    maslov: int
    deriv: complex          # d(energy_fn)/d tau at tau
    sin_theta0: complex     # rho / |sin tau| for real orbits (>= 0)
    cos_theta0: complex     # z / tau
    caustic: bool = False   # tangency: fast/slow coalesce, density diverges

    @property
    def x(self):
        """Offset of the flight time inside its cyclotron interval."""
        return self.tau - self.nu * PI

    @property
    def is_real(self):
        return self.kind is not Kind.GHOST


@dataclass(frozen=True)
class CausticPoint:
    tau: float
    rho: float
    z: float
    nu: int


# -- energy function ---------------------------------------------------------

def _check_pole(tau):
    s = np.sin(tau)
    # float multiples of pi leave sin ~ 1e-16 * tau rather than zero
    if np.any(np.asarray(tau) == 0) or np.any(np.abs(s) < 4e-16 * np.maximum(1.0, np.abs(tau))):
        raise DomainError("energy function has a pole at tau = nu*pi")
    return s


def energy_fn(tau, p: ScaledPoint):
    """Energy of the orbit reaching ``p`` in scaled time ``tau`` (units of E)."""
    s = _check_pole(tau)
    return p.rho**2 / s**2 + p.z**2 / tau**2


def energy_fn_deriv(tau, p: ScaledPoint):
    s = _check_pole(tau)
    return -2.0 * (p.rho**2 * np.cos(tau) / s**3 + p.z**2 / tau**3)


def energy_fn_deriv2(tau, p: ScaledPoint):
    s = _check_pole(tau)
    c = np.cos(tau)
    return 2.0 * p.rho**2 * (1 + 2 * c**2) / s**4 + 6.0 * p.z**2 / tau**4


# local-variable forms used by the vectorised solvers
def _e(x, tau, r2, z2):
    return r2 / np.sin(x) ** 2 + z2 / tau**2


def _de(x, tau, r2, z2):
    s = np.sin(x)
    return -2.0 * (r2 * np.cos(x) / s**3 + z2 / tau**3)


def _d2e(x, tau, r2, z2):
    s = np.sin(x)
    c = np.cos(x)
    return 2.0 * r2 * (1 + 2 * c * c) / s**4 + 6.0 * z2 / tau**4


def _bracketed_newton(fun, x0, lo, hi, lo_sign, maxiter=200):
    """Vectorised Newton iteration safeguarded by bisection.

    ``fun`` returns ``(f, f')``; ``lo_sign`` is the sign of ``f`` at ``lo``.
    Entries where ``lo >= hi`` are returned untouched.
    """
    x = np.array(x0, dtype=float)
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    bad = ~((x > lo) & (x < hi))
    x = np.where(bad, 0.5 * (lo + hi), x)
    active = hi > lo
    for _ in range(maxiter):
        if not active.any():
            break
        f, df = fun(x)
        same = np.sign(f) == lo_sign
        lo = np.where(active & same, x, lo)
        hi = np.where(active & ~same, x, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / df
        xn = x - step
        outside = ~((xn > lo) & (xn < hi)) | ~np.isfinite(xn)
        xn = np.where(outside, 0.5 * (lo + hi), xn)
        xn = np.where(active & (f != 0), xn, x)
        done = (np.abs(xn - x) <= 4e-16 * np.abs(x) + 1e-300) | (f == 0) | (hi - lo <= 4e-16 * np.abs(x))
        x = xn
        active &= ~done
    return x


@dataclass
class IntervalData:
    """Per-interval root information on broadcast arrays (shape of rho*nu)."""

    nu: np.ndarray
    x_min: np.ndarray
    e_min: np.ndarray
    e2_min: np.ndarray
    has_pair: np.ndarray
    x_fast: np.ndarray
    x_slow: np.ndarray
    d_fast: np.ndarray
    d_slow: np.ndarray


def solve_intervals(rho, z, nu):
    """Locate the minimum of the energy function and its real roots.

    ``rho``, ``z`` and ``nu`` broadcast against each other; ``rho`` must be
    strictly positive.  Newton iterations are seeded from the large-``nu``
    asymptotes and safeguarded by bisection inside each interval.
    """
    rho, z, nu = np.broadcast_arrays(np.asarray(rho, float), np.asarray(z, float), np.asarray(nu))
    r2 = rho * rho
    z2 = z * z
    base = nu * PI

    def dmin(x):
        t = base + x
        return _de(x, t, r2, z2), _d2e(x, t, r2, z2)

    zero = np.zeros_like(r2)
    top = np.full_like(r2, PI)
    x_min = _bracketed_newton(dmin, np.full_like(r2, 0.5 * PI), zero, top, -1.0)
    t_min = base + x_min
    e_min = _e(x_min, t_min, r2, z2)
    e2_min = _d2e(x_min, t_min, r2, z2)
    has_pair = e_min < 1.0

    def froot(x):
        t = base + x
        return _e(x, t, r2, z2) - 1.0, _de(x, t, r2, z2)

    with np.errstate(invalid="ignore", divide="ignore"):
        tg = base + np.arcsin(np.minimum(rho, 1.0))
        seed = np.arcsin(np.minimum(rho / np.sqrt(np.maximum(1.0 - z2 / tg**2, 1e-300)), 1.0))
    seed = np.where(np.isfinite(seed), seed, 0.5 * x_min)
    lo_pair = np.where(has_pair, zero, x_min)
    x_fast = _bracketed_newton(froot, seed, lo_pair, x_min, 1.0)
    x_slow = _bracketed_newton(froot, PI - seed, x_min, np.where(has_pair, top, x_min), -1.0)
    x_fast = np.where(has_pair, x_fast, np.nan)
    x_slow = np.where(has_pair, x_slow, np.nan)
    d_fast = _de(x_fast, base + x_fast, r2, z2)
    d_slow = _de(x_slow, base + x_slow, r2, z2)
    return IntervalData(nu, x_min, e_min, e2_min, has_pair, x_fast, x_slow, d_fast, d_slow)


def solve_ghosts(rho, z, nu, x_min, e_min, e2_min, maxiter=60):
    """Complex flight times in intervals without a real orbit pair.

    Returns ``(x, ok)`` where ``x`` is the complex local offset of the
    decaying member of the conjugate pair (negative imaginary part) and ``ok``
    marks converged entries.
    """
    rho, z, nu, x_min, e_min, e2_min = np.broadcast_arrays(rho, z, nu, x_min, e_min, e2_min)
    r2 = (rho * rho).astype(complex)
    z2 = (z * z).astype(complex)
    base = nu * PI
    eta = np.sqrt(np.maximum(2.0 * (e_min - 1.0) / e2_min, 0.0))
    eta = np.where(eta > 0, eta, 0.1)
    x = x_min - 1j * np.minimum(eta, 2.0)
    with np.errstate(all="ignore"):
        for _ in range(maxiter):
            t = base + x
            s = np.sin(x)
            f = r2 / s**2 + z2 / t**2 - 1.0
            df = -2.0 * (r2 * np.cos(x) / s**3 + z2 / t**3)
            step = f / df
            step = np.where(np.isfinite(step), step, 0.0)
            # damp wild steps so the iterate stays inside its interval
            big = np.abs(step) > 0.5
            step = np.where(big, 0.5 * step / np.abs(np.where(big, step, 1.0)), step)
            x = x - step
        t = base + x
        s = np.sin(x)
        res = np.abs(r2 / s**2 + z2 / t**2 - 1.0)
    x = np.where(x.imag > 0, np.conj(x), x)
    ok = (res < 1e-10) & (x.real > 0) & (x.real < PI) & (np.abs(x.imag) > 0) & np.isfinite(res)
    return x, ok


# -- orbit objects -------------------------------------------------------------

def _real_solution(p, nu, x, deriv, kind, caustic):
    tau = nu * PI + x
    s = math.sin(x)
    return TrajectorySolution(
        tau=complex(tau), nu=int(nu), kind=kind,
        maslov=2 * nu + (1 if kind is Kind.SLOW else 0),
        deriv=complex(deriv),
        sin_theta0=complex(p.rho / abs(s)), cos_theta0=complex(p.z / tau),
        caustic=caustic,
    )


def find_flight_times(p: ScaledPoint, nu_max: int):
    """All real orbits with ``tau < (nu_max+1)*pi``, sorted by flight time.

    The first root of each interval (earlier arrival, before the orbit has
    touched the turning surface, energy function decreasing) is the fast
    orbit with Maslov index ``2 nu``; the later one is slow with ``2 nu + 1``.
    """
    if p.rho <= 0:
        return []
    nus = np.arange(nu_max + 1)
    d = solve_intervals(p.rho, p.z, nus)
    out = []
    for i in np.flatnonzero(d.has_pair):
        nu = int(nus[i])
        caustic = abs(d.d_fast[i]) < CAUSTIC_TOL or abs(d.d_slow[i]) < CAUSTIC_TOL
        out.append(_real_solution(p, nu, d.x_fast[i], d.d_fast[i], Kind.FAST, caustic))
        out.append(_real_solution(p, nu, d.x_slow[i], d.d_slow[i], Kind.SLOW, caustic))
    return out


@dataclass(frozen=True)
class GhostFailure:
    nu: int
    residual_ok: bool = False


def find_ghost_times(p: ScaledPoint, nu_range, failures=None):
    """Decaying complex orbits for intervals in ``nu_range`` lacking a real pair.

    Intervals where complex Newton fails are skipped; a :class:`GhostFailure`
    record is appended to ``failures`` when a list is supplied.
    """
    nus = np.asarray(list(nu_range))
    if nus.size == 0 or p.rho <= 0:
        return []
    d = solve_intervals(p.rho, p.z, nus)
    dark = ~d.has_pair
    x, ok = solve_ghosts(p.rho, p.z, nus, d.x_min, d.e_min, d.e2_min)
    out = []
    for i in np.flatnonzero(dark):
        nu = int(nus[i])
        if not ok[i]:
            if failures is not None:
                failures.append(GhostFailure(nu))
            continue
        xi = complex(x[i])
        tau = nu * PI + xi
        s = np.sin(xi)
        deriv = -2.0 * (p.rho**2 * np.cos(xi) / s**3 + p.z**2 / tau**3)
        out.append(TrajectorySolution(
            tau=tau, nu=nu, kind=Kind.GHOST, maslov=2 * nu, deriv=complex(deriv),
            sin_theta0=complex(p.rho / s), cos_theta0=complex(p.z / tau),
        ))
    return out


def trajectory_state(sol: TrajectorySolution, p: ScaledPoint):
    """Arrival position and velocity (units of v0) of a real orbit.

    Returns ``((rho, z), (v_rho, v_phi, v_z))``.  The radial velocity
    ``rho * cot(tau)`` carries the sign bookkeeping of the signed-radius
    picture, in which odd intervals arrive at negative radius.
    """
    if not sol.is_real:
        raise NotApplicableError("trajectory_state needs a real orbit")
    x = sol.x.real
    tau = sol.tau.real
    v_rho = p.rho * math.cos(x) / math.sin(x)
    return (p.rho, p.z), (v_rho, -p.rho, p.z / tau)


def orbit_path(sol: TrajectorySolution, p: ScaledPoint, t):
    """Signed-radius position of the orbit at intermediate scaled times ``t``."""
    s = math.sin(sol.tau.real)
    sin_t0 = p.rho / s
    cos_t0 = p.z / sol.tau.real
    t = np.asarray(t, dtype=float)
    return sin_t0 * np.sin(t), t * cos_t0


def jacobian_det(sol: TrajectorySolution, p: ScaledPoint):
    """Determinant ``sin^2(theta0) tau cos(tau) + cos^2(theta0) sin(tau)``.

    Equals ``-tau sin(tau) E'(tau) / 2`` and therefore vanishes on caustics.
    Rows ordered ``(rho, z, phi)``, columns ``(theta0, tau, phi0)``.
    """
    if not sol.is_real:
        raise NotApplicableError("jacobian_det needs a real orbit")
    tau = sol.tau.real
    s = math.sin(tau)
    return p.rho**2 * tau * math.cos(tau) / s**2 + p.z**2 * s / tau**2


def classical_density(sol: TrajectorySolution, p: ScaledPoint, epsilon=None):
    """Dimensionless density ``2 / (tau sin^2 tau |E'(tau)|)`` of one orbit family.

    Natural density units, with the classical emission rate identified with
    the free-particle source current.  ``epsilon`` is accepted for symmetry
    with the wave-based routines; the classical density is universal.
    """
    if not sol.is_real:
        raise NotApplicableError("classical_density needs a real orbit")
    d = abs(sol.deriv.real)
    if d < CAUSTIC_TOL or sol.caustic:
        raise CausticDivergence(f"classical density diverges at tau={sol.tau.real:.12g}")
    x = sol.x.real
    return 2.0 / (sol.tau.real * math.sin(x) ** 2 * d)


# -- caustics ------------------------------------------------------------------

def _caustic_nu(tau):
    nu = math.floor(tau / PI - 0.5)
    lo = (nu + 0.5) * PI
    hi = (nu + 1) * PI
    tol = 1e-12 * max(1.0, tau)
    if nu < 0 or tau < lo - tol or tau > hi + tol:
        raise DomainError(f"tau={tau} is outside every caustic branch [(nu+1/2)pi, (nu+1)pi]")
    return nu


def caustic_arrays(tau):
    """Vectorised ``(rho, z>=0)`` of the caustic parametrisation."""
    tau = np.asarray(tau, dtype=float)
    s = np.sin(tau)
    c = np.cos(tau)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho2 = s**3 / (s - tau * c)
        z2 = tau**3 * c / (tau * c - s)
    return np.sqrt(np.maximum(rho2, 0.0)), np.sqrt(np.maximum(z2, 0.0))


def caustic_point(tau, branch=1):
    """Point on the caustic surface reached by the tangent orbit of flight time ``tau``."""
    nu = _caustic_nu(tau)
    rho, z = caustic_arrays(tau)
    sign = 1.0 if branch >= 0 else -1.0
    return CausticPoint(float(tau), float(rho), sign * float(z), nu)


def caustic_surface(nu, samples):
    """Polyline of caustic surface ``nu`` (upper branch) on a uniform ``tau`` grid."""
    if nu < 0 or samples < 2:
        raise DomainError("caustic_surface needs nu >= 0 and samples >= 2")
    taus = np.linspace((nu + 0.5) * PI, (nu + 1) * PI, samples)
    rho, z = caustic_arrays(taus)
    # endpoint values are known exactly
    rho[0], z[0] = 1.0, 0.0
    rho[-1], z[-1] = 0.0, (nu + 1) * PI
    return [CausticPoint(float(t), float(r), float(h), nu) for t, r, h in zip(taus, rho, z)]


def caustic_radius(nu, z):
    """Radius where caustic surface ``nu`` crosses the plane at height ``|z|``, or None."""
    z = abs(z)
    lo, hi = (nu + 0.5) * PI, (nu + 1) * PI
    if z >= hi:
        return None
    if z == 0:
        return 1.0
    tau = brentq(lambda t: caustic_arrays(t)[1] - z, lo, hi, xtol=1e-15, rtol=1e-15)
    return float(caustic_arrays(tau)[0])
