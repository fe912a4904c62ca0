"""Exact Green function of the point source as a sum over Landau channels.

The Green function is expressed in units of ``m k / (4 pi eps hbar^2)``, so
that ``|G|^2`` is a density in natural units and a free source gives
``G = -exp(2 i eps r) / r`` in scaled coordinates.  Currents come out in units
of ``m k^3 / (16 pi^2 eps^2 hbar^3)``; with these choices the longitudinal and
radial currents are ``Im(G* grad G) / (2 eps)`` and the azimuthal current is
``-rho |G|^2``.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import InvalidParameterError, SlowConvergenceError, ThresholdError
from .scaling import ScaledPoint
from .specialfn import LaguerreStepper, laguerre_all, weighted_laguerre

THRESHOLD_TOL = 1e-9
SERIES_TOL = 1e-14


@dataclass(frozen=True)
class ChannelTerm:
    l: int
    is_open: bool
    kappa: float            # sqrt(eps |eps - 2l - 1|)
    amplitude: complex      # contribution to G at the requested point


@dataclass(frozen=True)
class GreenValue:
    g: complex
    d_rho: complex
    d_z: complex
    l_max: int
    error_estimate: float


def check_epsilon(eps):
    """Raise for non-positive ``eps`` or ``eps`` on a Landau threshold."""
    if not (eps > 0 and math.isfinite(eps)):
        raise InvalidParameterError(f"epsilon must be positive, got {eps!r}")
    level = max(0, int(round((eps - 1) / 2)))
    if abs(eps - (2 * level + 1)) < THRESHOLD_TOL:
        raise ThresholdError(eps, level)


def open_channel_count(eps):
    """Number of channels with ``2l+1 < eps``."""
    return max(0, math.ceil((eps - 1) / 2 - 1e-12)) if eps > 1 else 0


PLANE_BAND = 0.01


def _default_caps(az, eps, tol):
    """Per-point term caps; outside the source-plane band the decay decides."""
    base = int(max(8 * eps, 2000))
    with np.errstate(divide="ignore"):
        k_need = (math.log(1.0 / tol) + 10.0) / (2.0 * np.maximum(az, PLANE_BAND))
    need = np.ceil(0.5 * (k_need**2 / eps + eps - 1.0)) + 2
    return np.where(az >= PLANE_BAND, np.maximum(need, base), base).astype(np.int64)


def green_arrays(rho, z, eps, tol=SERIES_TOL, l_cap=None):
    """Vectorised Green function and its analytic gradient.

    Returns ``(g, g_rho, g_z, l_used, err)`` with arrays of the broadcast
    shape of ``rho`` and ``z``.  The evanescent tail is truncated once a
    geometric bound on the remainder drops below ``tol`` times the partial
    sum; ``err`` is that bound relative to ``|g|``.  Close to the plane
    ``z = 0`` the bound never closes and the cap ``l_cap`` ends the sum; the
    size of the last included term is reported there instead.  Without an
    explicit ``l_cap`` the cap is ``max(8 eps, 2000)`` inside the band
    ``|z| < 0.01`` and large enough for the decay to reach ``tol`` outside it.
    """
    check_epsilon(eps)
    rho, z = np.broadcast_arrays(np.asarray(rho, float), np.asarray(z, float))
    shape = rho.shape
    rho = rho.ravel().copy()
    az = np.abs(z).ravel()
    sz = np.sign(z).ravel()
    n_open = open_channel_count(eps)
    if l_cap is None:
        caps = _default_caps(az, eps, tol)
    else:
        caps = np.full(az.shape, int(l_cap))
    caps = np.maximum(caps, n_open + 1)
    l_cap = int(caps.max()) if caps.size else 0
    npt = rho.size
    g = np.zeros(npt, complex)
    gr = np.zeros(npt, complex)
    gz = np.zeros(npt, complex)
    err = np.full(npt, np.inf)
    l_used = np.zeros(npt, int)

    idx = np.arange(npt)             # points still being summed
    st = LaguerreStepper(2.0 * eps * rho * rho)
    r, a, sg, cp = rho, az, sz, caps
    pg, pr, pz = g.copy(), gr.copy(), gz.copy()
    for l in range(l_cap):
        w, d = st.values()
        detune = eps - 2 * l - 1
        kappa = math.sqrt(eps * abs(detune))
        dw = -2.0 * eps * r * (w + 2.0 * d)
        if detune > 0:
            ph = np.exp(2j * kappa * a)
            c = ph / (1j * kappa)
        else:
            ph = np.exp(-2.0 * kappa * a)
            c = -ph / kappa
        pg += c * w
        pr += c * dw
        pz += 2.0 * sg * ph * w
        if l >= n_open:
            # remainder bound: |w| <= 1, |d| <= l+1, geometric decay ratio
            k_next = math.sqrt(eps * (2 * l + 3 - eps))
            ratio = np.exp(-2.0 * a * (k_next - kappa))
            with np.errstate(divide="ignore", invalid="ignore"):
                tail = np.exp(-2.0 * k_next * a) / (1.0 - ratio)
                scale = (max(1.0, 2.0 * k_next) + 4.0 * eps * r * (l + 2)) / k_next
                mag = np.abs(pg) + (np.abs(pr) + np.abs(pz)) / (1.0 + 2.0 * eps)
                rel = tail * scale / mag
                last = (np.abs(c * w) + np.abs(c * dw) / (1.0 + 2.0 * eps)) / mag
            done = rel < tol
            capped = cp == l + 1
            if capped.any():
                done |= capped
                rel = np.where(capped & np.isfinite(rel), np.minimum(rel, last),
                               np.where(capped, last, rel))
            if done.any():
                fin = idx[done]
                g[fin], gr[fin], gz[fin] = pg[done], pr[done], pz[done]
                err[fin] = rel[done]
                l_used[fin] = l + 1
                keep = ~done
                idx = idx[keep]
                if idx.size == 0:
                    break
                st.restrict(keep)
                r, a, sg, cp = r[keep], a[keep], sg[keep], cp[keep]
                pg, pr, pz = pg[keep], pr[keep], pz[keep]
        st.advance()
    f = 2.0 * eps
    return ((f * g).reshape(shape), (f * gr).reshape(shape), (f * gz).reshape(shape),
            l_used.reshape(shape), err.reshape(shape))


def green(p: ScaledPoint, eps, tol=None):
    """Green function at one point.

    With ``tol=None`` the series is summed to machine precision where it can
    be and the remaining error estimate is reported; with an explicit ``tol``
    a :class:`SlowConvergenceError` is raised when it cannot be reached.
    """
    if p.rho == 0 and p.z == 0:
        raise InvalidParameterError("the Green function is singular at the source")
    g, gr, gz, l_used, err = green_arrays(p.rho, p.z, eps, tol=tol or SERIES_TOL)
    e = float(err)
    if tol is not None and not e <= tol:
        raise SlowConvergenceError(
            f"channel series at z={p.z:g} stalls at relative error {e:.3g} (requested {tol:g})")
    return GreenValue(complex(g), complex(gr), complex(gz), int(l_used), e)


def channel_terms(p: ScaledPoint, eps, l_max):
    """Individual channel contributions ``l = 0..l_max`` to the Green function."""
    check_epsilon(eps)
    tab = laguerre_all(l_max, 2 * eps * p.rho**2)
    pre = 2 * eps * math.exp(-eps * p.rho**2)
    out = []
    for l in range(l_max + 1):
        detune = eps - 2 * l - 1
        kappa = math.sqrt(eps * abs(detune))
        if detune > 0:
            c = np.exp(2j * kappa * abs(p.z)) / (1j * kappa)
        else:
            c = -math.exp(-2 * kappa * abs(p.z)) / kappa
        out.append(ChannelTerm(l, detune > 0, kappa, complex(pre * tab.values[l] * c)))
    return out


def density(p: ScaledPoint, eps):
    return abs(green(p, eps).g) ** 2


def current_arrays(g, gr, gz, rho, eps):
    """``(j_rho, j_phi, j_z)`` from Green function values and gradients."""
    n = np.abs(g) ** 2
    jr = np.imag(np.conj(g) * gr) / (2.0 * eps)
    jz = np.imag(np.conj(g) * gz) / (2.0 * eps)
    return jr, -rho * n, jz


def current(p: ScaledPoint, eps):
    gv = green(p, eps)
    jr, jp, jz = current_arrays(gv.g, gv.d_rho, gv.d_z, p.rho, eps)
    return float(jr), float(jp), float(jz)


def total_current(eps):
    """Total emitted current in units of the free-source current."""
    check_epsilon(eps)
    n = open_channel_count(eps)
    return float(sum(1.0 / math.sqrt(eps * (eps - 2 * l - 1)) for l in range(n)))


def source_limit_current(eps):
    """Total current from ``-(2/hbar) Im G`` at the source, units of J_free.

    Only open channels carry an imaginary part at the origin, so the
    (divergent, real) evanescent sum never has to be formed.
    """
    check_epsilon(eps)
    n = open_channel_count(eps)
    if n == 0:
        return 0.0
    terms = channel_terms(ScaledPoint(0.0, 0.0), eps, n - 1)
    g_open = sum(t.amplitude for t in terms if t.is_open)
    return float(-g_open.imag / (2.0 * eps))


def landau_state(l, rho, eps):
    """Normalised radial Landau state with zero angular momentum.

    Normalisation: ``integral |psi|^2 2 pi rho drho = 1`` in scaled units.
    """
    rho = np.asarray(rho, dtype=float)
    u = 2.0 * eps * rho * rho
    val = None
    for k, w, _ in weighted_laguerre(u, l + 1):
        val = w
    out = math.sqrt(2.0 * eps / math.pi) * val
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FreeReference:
    green: complex          # units of m k / (4 pi eps hbar^2)
    density: float          # natural density units
    current: float          # natural current units
    total_current: float    # units of J_free


def free_reference(r, eps):
    """Field-free point source at scaled distance ``r``, in the same natural units."""
    if not r > 0:
        raise InvalidParameterError("free-particle source is singular at r = 0")
    return FreeReference(complex(-np.exp(2j * eps * r) / r), 1.0 / r**2, 1.0 / r**2, 1.0)
