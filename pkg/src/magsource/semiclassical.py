"""Closed-orbit (semiclassical) approximation to the source wavefunction.

Every orbit from the source to the destination contributes
``sqrt(n_cl) * exp(i * phase)`` with the classical density ``n_cl`` and the
phase ``D - pi*nu - (pi/2)[slow]`` built from the dynamical phase ``D``.
Wavefunctions share the units and phase convention of the quantum Green
function, so ``|psi|**2`` is a density in natural units.  Close to caustics
the fast/slow pair of an interval is replaced by its Airy-function uniform
approximation, and intervals without real orbits contribute a decaying
complex ("ghost") orbit.

All work is done per cyclotron interval on whole arrays of destinations;
``evaluate`` is the vectorised entry point used by the field samplers.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import classical as cl
from .errors import ContractViolation, InvalidParameterError
from .scaling import ScaledPoint
from .specialfn import AIRY_WINDOW, airy_ai

PI = math.pi
SQRT_PI = math.sqrt(math.pi)
SOURCE_SIGN = -1.0       # free outgoing wave is -exp(ikr)/r in these units
IMAG_CUTOFF = 700.0     # ghosts damped by more than exp(-700) are dropped
AXIS_RHO = 0.05         # semiclassics is unreliable closer to the axis
CHUNK_ENTRIES = 400_000
COALESCE_HALF_WIDTH = 1e-3  # half root separation below which pairs count as coalesced

# reason codes, combined as bit flags
FLAG_OK = 0
FLAG_CAUSTIC = 1
FLAG_AXIS = 2
FLAG_SLOW_SERIES = 4
FLAG_GHOST_SKIPPED = 8


@dataclass(frozen=True)
class SummationPolicy:
    method: str = "uniform"     # "uniform" or "primitive"
    orbits: int = 500
    ghosts: bool = True

    def __post_init__(self):
        if self.method not in ("uniform", "primitive"):
            raise InvalidParameterError(f"unknown semiclassical method {self.method!r}")
        if self.orbits < 1:
            raise InvalidParameterError("orbit cutoff must be at least 1")

    @property
    def intervals(self):
        return (self.orbits + 1) // 2


@dataclass(frozen=True)
class OrbitContribution:
    solution: cl.TrajectorySolution
    amplitude: complex      # sqrt of the classical density (branch fixed for ghosts)
    dynamical_phase: complex
    phase: complex          # dynamical phase with Maslov and interval corrections
    velocity: tuple         # (v_rho, v_phi, v_z) in units of v0
    value: complex          # amplitude * exp(i * phase)


# -- scalar orbit quantities ---------------------------------------------------

def _local_phase(x, tau, r2, z2, eps):
    # D minus eps*nu*pi; the interval part is added separately mod 2 pi
    return eps * (r2 * np.cos(x) / np.sin(x) + z2 / tau + x)


def _interval_phase(nu, eps):
    """``eps*nu*pi - nu*pi`` reduced mod 2 pi."""
    return PI * np.mod((eps - 1.0) * nu, 2.0)


def dynamical_phase(sol: cl.TrajectorySolution, p: ScaledPoint, eps):
    """Action of the orbit over hbar: ``eps (rho^2 cot tau + z^2/tau + tau)``."""
    x = sol.x
    return complex(eps * (p.rho**2 * np.cos(x) / np.sin(x) + p.z**2 / sol.tau + sol.tau))


def _ghost_amplitude(x, tau, r2, z2):
    s = np.sin(x)
    d = -2.0 * (r2 * np.cos(x) / s**3 + z2 / tau**3)
    a = np.sqrt(-2.0 / (tau * s * s * d))
    # branch that continues the slow member of the real pair
    return np.where((np.exp(0.25j * PI) * a).real < 0, -a, a)


def check_positive(eps):
    """Orbit sums exist at any positive energy, Landau thresholds included."""
    if not (isinstance(eps, (int, float, np.floating, np.integer)) and math.isfinite(eps) and eps > 0):
        raise InvalidParameterError(f"epsilon must be positive and finite, got {eps!r}")


def orbit_contribution(sol: cl.TrajectorySolution, p: ScaledPoint, eps):
    """Primitive contribution of a single real or complex orbit."""
    check_positive(eps)
    r2, z2 = p.rho**2, p.z**2
    x, tau = sol.x, sol.tau
    if sol.is_real:
        xr, tr = x.real, tau.real
        amp = complex(math.sqrt(2.0 / (tr * math.sin(xr) ** 2 * abs(sol.deriv.real))))
        loc = float(_local_phase(xr, tr, r2, z2, eps))
        vel = (complex(p.rho / math.tan(xr)), complex(-p.rho), complex(p.z / tr))
    else:
        amp = complex(_ghost_amplitude(x, tau, r2, z2))
        loc = complex(_local_phase(x, tau, r2, z2, eps))
        vel = (complex(p.rho * np.cos(x) / np.sin(x)), complex(-p.rho), complex(p.z / tau))
    phase = loc + _interval_phase(sol.nu, eps) - (0.5 * PI if sol.kind is cl.Kind.SLOW else 0.0)
    dyn = loc + eps * sol.nu * PI
    return OrbitContribution(sol, amp, complex(dyn), complex(phase), vel,
                             complex(SOURCE_SIGN * amp * np.exp(1j * phase)))


def uniform_pair(fast: OrbitContribution, slow: OrbitContribution, eps=None):
    """Airy uniform approximation replacing a fast/slow pair of one interval."""
    if (fast.solution.nu != slow.solution.nu or fast.solution.kind is not cl.Kind.FAST
            or slow.solution.kind is not cl.Kind.SLOW):
        raise ContractViolation("uniform_pair needs the fast and slow orbit of one interval")
    base = fast.phase.real
    half = 0.5 * (slow.phase.real + 0.5 * PI - base)
    half = max(half, 0.0)
    xi = (1.5 * half) ** (2.0 / 3.0)
    mean = base + half
    if xi > AIRY_WINDOW:
        return fast.value + slow.value
    return complex(SOURCE_SIGN * _bright(fast.amplitude.real, slow.amplitude.real, xi, mean))


def uniform_ghost(ghost: OrbitContribution):
    """Airy continuation on the dark side of a caustic, fed by one ghost orbit."""
    if ghost.solution.kind is not cl.Kind.GHOST:
        raise ContractViolation("uniform_ghost needs a complex orbit")
    y = (1.5 * max(ghost.phase.imag, 0.0)) ** (2.0 / 3.0)
    if y > AIRY_WINDOW:
        return ghost.value
    return complex(SOURCE_SIGN * _dark(ghost.amplitude, y, ghost.phase.real))


def _bright(p, q, xi, mean):
    ai, aip = airy_ai(-xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        q4 = np.power(xi, 0.25)
        core = q4 * (p + q) * ai - 1j * (p - q) / q4 * aip
    core = np.where(xi > 0, core, 0.0)
    return SQRT_PI * np.exp(1j * (mean - 0.25 * PI)) * core


def _dark(p, y, phase_re):
    ai, aip = airy_ai(y)
    q4 = np.power(np.maximum(y, 1e-300), 0.25)
    a_plus = 2.0 * q4 * (np.exp(0.25j * PI) * p).real
    a_minus = 2.0 / q4 * (np.exp(-0.25j * PI) * p).real
    return SQRT_PI * np.exp(1j * (phase_re - 0.25 * PI)) * (a_plus * ai - 1j * a_minus * aip)


def _coalesced(rho, z, nu, xm, e_min, e2, eps, ncomp):
    """Uniform pair value from a cubic expansion about the energy minimum.

    Valid on both sides of the caustic: ``c = 1 - e_min`` is positive where
    the real pair exists and negative where a ghost replaces it.  Returns the
    wavefunction term and its velocity-weighted versions, without the
    interval phase and the source sign.
    """
    tau = nu * PI + xm
    s = np.sin(xm)
    cot = np.cos(xm) / s
    csc2 = 1.0 / (s * s)
    r2, z2 = rho * rho, z * z
    g = -8.0 * r2 * csc2 * (cot**3 + 2.0 * csc2 * cot) - 24.0 * z2 / tau**5
    h = 2.0 * csc2 / tau
    kappa = -1.0 / tau - 2.0 * cot - g / (3.0 * e2)
    scale = (0.5 * eps * e2) ** (1.0 / 6.0)
    root = np.sqrt(h / e2)
    xi = scale**4 * 2.0 * (1.0 - e_min) / e2
    ai, aip = airy_ai(-np.clip(xi, -AIRY_WINDOW, AIRY_WINDOW))
    ph = np.exp(1j * (_local_phase(xm, tau, r2, z2, eps) - 0.25 * PI)) * SQRT_PI

    def term(v, dv):
        a_plus = 2.0 * scale * root * v
        a_minus = -root / scale * (kappa * v + 2.0 * dv)
        return ph * (a_plus * ai - 1j * a_minus * aip)

    one = np.ones_like(xm)
    # (v, dv/dx) for v_rho, v_phi, v_z
    vel = ((rho * cot, -rho * csc2), (-rho * one, 0.0 * one), (z / tau, -z / tau**2))
    return term(one, 0.0 * one), [term(*vel[k]) for k in range(ncomp)]


# -- vectorised evaluation -----------------------------------------------------

@dataclass
class IntervalTerms:
    """Per-interval contributions for a batch of destinations (shape P x K)."""

    psi: np.ndarray
    current: np.ndarray | None      # (3, P, K): rho, phi, z components
    has_pair: np.ndarray
    e_min: np.ndarray
    degenerate: np.ndarray
    ghost_skipped: np.ndarray


def interval_terms(rho, z, eps, n_intervals, method="uniform", ghosts=True,
                   with_current=False, drop_last_slow=False):
    """Contributions of intervals ``0..n_intervals-1`` for 1-D point arrays.

    ``drop_last_slow`` omits the slow orbit of the final interval (primitive
    sums over an odd number of orbits).
    """
    rho = np.maximum(np.asarray(rho, float).ravel(), 1e-8)
    z = np.asarray(z, float).ravel()
    R = rho[:, None]
    Z = z[:, None]
    nu = np.arange(n_intervals)[None, :]
    r2, z2 = R * R, Z * Z
    d = cl.solve_intervals(R, Z, nu)
    shape = d.x_min.shape
    base = _interval_phase(nu, eps)
    pair = d.has_pair
    ncomp = 3 if with_current else 0
    psi = np.zeros(shape, complex)
    cur = np.zeros((3,) + shape, complex) if with_current else None
    degenerate = np.zeros(shape, bool)
    skipped = np.zeros(shape, bool)

    if pair.any():
        i = np.nonzero(pair)
        rr, zz, nn = r2[i[0], 0], z2[i[0], 0], nu[0, i[1]]
        xf, xs = d.x_fast[i], d.x_slow[i]
        tf, ts = nn * PI + xf, nn * PI + xs
        sf, ss = np.sin(xf), np.sin(xs)
        df, ds = np.abs(d.d_fast[i]), np.abs(d.d_slow[i])
        deg = (df < cl.CAUSTIC_TOL) | (ds < cl.CAUSTIC_TOL)
        degenerate[i] = deg
        with np.errstate(divide="ignore"):
            af = np.sqrt(2.0 / (tf * sf * sf * df))
            as_ = np.sqrt(2.0 / (ts * ss * ss * ds))
        phf = _local_phase(xf, tf, rr, zz, eps)
        phs = _local_phase(xs, ts, rr, zz, eps)
        b = base[0, i[1]]
        rho_i = np.sqrt(rr)
        z_i = z[i[0]]
        vf = (rho_i * np.cos(xf) / sf, -rho_i, z_i / tf)
        vs = (rho_i * np.cos(xs) / ss, -rho_i, z_i / ts)
        if method == "primitive":
            keep_slow = np.ones_like(xs)
            if drop_last_slow:
                keep_slow = np.where(nn == n_intervals - 1, 0.0, 1.0)
            ef = np.exp(1j * (phf + b))
            es = np.exp(1j * (phs + b - 0.5 * PI)) * keep_slow
            psi[i] = af * ef + as_ * es
            for k in range(ncomp):
                cur[k][i] = af * vf[k] * ef + as_ * vs[k] * es
        else:
            half = np.maximum(0.5 * (phs - phf), 0.0)
            xi = (1.5 * half) ** (2.0 / 3.0)
            mean = 0.5 * (phf + phs) + b
            near = xi <= AIRY_WINDOW
            far = ~near

            def combine(pf, ps):
                out = np.empty(xf.shape, complex)
                out[near] = _bright(pf[near], ps[near], xi[near], mean[near])
                out[far] = (pf[far] * np.exp(1j * (phf[far] + b[far]))
                            + ps[far] * np.exp(1j * (phs[far] + b[far] - 0.5 * PI)))
                return out

            with np.errstate(invalid="ignore"):
                psi[i] = combine(af, as_)
                for k in range(ncomp):
                    cur[k][i] = combine(af * vf[k], as_ * vs[k])

    dark = ~pair
    close = np.zeros(shape, bool)
    if method == "uniform":
        # nearly coalesced roots: Airy inputs lose precision, use the cubic expansion
        with np.errstate(divide="ignore", invalid="ignore"):
            close = np.abs(1.0 - d.e_min) < 0.5 * d.e2_min * COALESCE_HALF_WIDTH**2
        if not ghosts:
            close &= pair
        if close.any():
            i = np.nonzero(close)
            val, cv = _coalesced(R[i[0], 0], z[i[0]], nu[0, i[1]], d.x_min[i], d.e_min[i],
                                 d.e2_min[i], eps, ncomp)
            psi[i] = val * np.exp(1j * base[0, i[1]])
            for k in range(ncomp):
                cur[k][i] = cv[k] * np.exp(1j * base[0, i[1]])
        dark = dark & ~close

    if ghosts and dark.any():
        i = np.nonzero(dark)
        rr, zz, nn = r2[i[0], 0], z2[i[0], 0], nu[0, i[1]]
        x, ok = cl.solve_ghosts(np.sqrt(rr), z[i[0]], nn, d.x_min[i], d.e_min[i], d.e2_min[i])
        tau = nn * PI + x
        loc = _local_phase(x, tau, rr, zz, eps)
        flip = loc.imag < 0
        x = np.where(flip, np.conj(x), x)
        tau = nn * PI + x
        loc = np.where(flip, np.conj(loc), loc)
        amp = _ghost_amplitude(x, tau, rr, zz)
        good = ok & np.isfinite(amp) & np.isfinite(loc)
        skipped[i] = ~ok
        live = good & (loc.imag <= IMAG_CUTOFF)
        b = base[0, i[1]]
        rho_i = np.sqrt(rr)
        vel = (rho_i * np.cos(x) / np.sin(x), -rho_i + 0j, z[i[0]] / tau)
        if method == "uniform":
            y = (1.5 * np.maximum(loc.imag, 0.0)) ** (2.0 / 3.0)
            near = live & (y <= AIRY_WINDOW)
        else:
            y = None
            near = np.zeros(live.shape, bool)
        prim = live & ~near
        e = np.exp(1j * (np.where(live, loc, 0.0) + b))

        def ghost_sum(a):
            out = np.zeros(x.shape, complex)
            out[prim] = a[prim] * e[prim]
            if near.any():
                out[near] = _dark(a[near], y[near], loc.real[near] + b[near])
            return out

        psi[i] = ghost_sum(amp)
        for k in range(ncomp):
            cur[k][i] = ghost_sum(amp * vel[k])

    psi *= SOURCE_SIGN
    if with_current:
        cur *= SOURCE_SIGN
    return IntervalTerms(psi, cur, pair, d.e_min, degenerate, skipped)


@dataclass
class SCField:
    psi: np.ndarray
    j_rho: np.ndarray | None
    j_phi: np.ndarray | None
    j_z: np.ndarray | None
    flags: np.ndarray
    pair_count: np.ndarray
    margin: np.ndarray      # min over intervals of |e_min - 1|
    orbits_used: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def density(self):
        return np.abs(self.psi) ** 2


def evaluate(rho, z, eps, policy: SummationPolicy = SummationPolicy(), with_current=True):
    """Semiclassical wavefunction (and currents) on arrays of destinations.

    ``rho`` and ``z`` broadcast together; results have their shape.  Currents
    are ``Re(conj(psi) * sum_nu v_nu psi_nu)`` in natural current units.
    """
    check_positive(eps)
    rho, z = np.broadcast_arrays(np.asarray(rho, float), np.asarray(z, float))
    shape = rho.shape
    rf, zf = rho.ravel(), z.ravel()
    if np.any(rf < 0):
        raise InvalidParameterError("rho must be non-negative")
    K = policy.intervals
    odd_drop = policy.method == "primitive" and policy.orbits % 2 == 1
    npt = rf.size
    psi = np.zeros(npt, complex)
    cur = np.zeros((3, npt), complex)
    flags = np.zeros(npt, np.uint8)
    pcount = np.zeros(npt, int)
    margin = np.zeros(npt)
    step = max(1, CHUNK_ENTRIES // K)
    for a in range(0, npt, step):
        sl = slice(a, min(npt, a + step))
        t = interval_terms(rf[sl], zf[sl], eps, K, policy.method, policy.ghosts,
                           with_current, drop_last_slow=False)
        pc = t.has_pair.sum(axis=1)
        if odd_drop:
            # first N orbits by flight time: only all-pair points overshoot
            over = pc == K
            if over.any():
                t2 = interval_terms(rf[sl][over], zf[sl][over], eps, K, policy.method,
                                    policy.ghosts, with_current, drop_last_slow=True)
                t.psi[over] = t2.psi
                if with_current:
                    t.current[:, over] = t2.current
        psi[sl] = t.psi.sum(axis=1)
        if with_current:
            cur[:, sl] = t.current.sum(axis=2)
        fl = np.zeros(pc.shape, np.uint8)
        if policy.method == "primitive":
            fl |= np.where(t.degenerate.any(axis=1), FLAG_CAUSTIC, 0).astype(np.uint8)
        fl |= np.where(t.ghost_skipped.any(axis=1), FLAG_GHOST_SKIPPED, 0).astype(np.uint8)
        flags[sl] = fl
        pcount[sl] = pc
        margin[sl] = np.abs(t.e_min - 1.0).min(axis=1)
    flags |= np.where(rf < AXIS_RHO, FLAG_AXIS, 0).astype(np.uint8)
    if with_current:
        j = np.real(np.conj(psi)[None, :] * cur)
        jr, jp, jz = (c.reshape(shape) for c in j)
    else:
        jr = jp = jz = None
    return SCField(psi.reshape(shape), jr, jp, jz, flags.reshape(shape),
                   pcount.reshape(shape), margin.reshape(shape), policy.orbits)


def wavefunction(p: ScaledPoint, eps, policy: SummationPolicy = SummationPolicy()):
    return complex(evaluate(p.rho, p.z, eps, policy, with_current=False).psi)


def sc_density(p: ScaledPoint, eps, policy: SummationPolicy = SummationPolicy()):
    return abs(wavefunction(p, eps, policy)) ** 2


def sc_current(p: ScaledPoint, eps, policy: SummationPolicy = SummationPolicy()):
    f = evaluate(p.rho, p.z, eps, policy)
    return float(f.j_rho), float(f.j_phi), float(f.j_z)


def periodic_zeta_partial(eps, n_terms):
    """``sum_{nu=1}^{N} exp(i pi (eps-1) nu) / sqrt(nu)``.

    This is the large-``nu`` tail of the orbit sum; it stays bounded unless
    ``eps`` is an odd integer, where it grows like ``2 sqrt(N)``.
    """
    nu = np.arange(1, int(n_terms) + 1)
    return complex(np.sum(np.exp(1j * _interval_phase(nu, eps)) / np.sqrt(nu)))
