"""Sampling of densities and currents on grids and radial profiles, plus
PGM/PPM image encoders and the CSV writer.

Maps store the integrated quantity ``2 pi rho q`` by default (the
azimuthally summed contribution of a ring).  Payload rows run along z
(``z_min`` first, i.e. the top image row), columns along rho.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
import io
import math
import os

import numpy as np

from . import quantum as qm
from . import semiclassical as sc
from .errors import ContractViolation, InvalidParameterError
from .semiclassical import (FLAG_AXIS, FLAG_CAUSTIC, FLAG_GHOST_SKIPPED, FLAG_OK,
                            FLAG_SLOW_SERIES, SummationPolicy, check_positive)

FLAG_NONFINITE = 16
FLAG_NAMES = {
    FLAG_CAUSTIC: "caustic",
    FLAG_AXIS: "near_axis",
    FLAG_SLOW_SERIES: "slow_series",
    FLAG_GHOST_SKIPPED: "ghost_skipped",
    FLAG_NONFINITE: "non_finite",
}
SERIES_FLAG_TOL = 1e-6      # quantum samples with a larger error estimate are flagged
SOURCE_EXCLUSION = 0.1     # pixels this close to the source saturate instead of setting the scale
ROWS_PER_TASK = 8           # fixed work unit, keeps output independent of worker count
CSV_MAGIC = "# magsource v1"


class Quantity(Enum):
    DENSITY = "density"
    CURRENT_Z = "current_z"
    CURRENT_RHO = "current_rho"
    CURRENT_PHI = "current_phi"
    CURRENT_VECTOR = "current_vector"

    @property
    def is_vector(self):
        return self is Quantity.CURRENT_VECTOR

    @property
    def needs_current(self):
        return self is not Quantity.DENSITY


class Method(Enum):
    QUANTUM = "quantum"
    PRIMITIVE = "primitive"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class GridSpec:
    rho_min: float
    rho_max: float
    z_min: float
    z_max: float
    width: int
    height: int
    supersample: int = 1

    def __post_init__(self):
        if not (self.rho_max > self.rho_min >= 0):
            raise InvalidParameterError("need 0 <= rho_min < rho_max")
        if not self.z_max > self.z_min:
            raise InvalidParameterError("need z_min < z_max")
        if self.width < 1 or self.height < 1 or self.supersample < 1:
            raise InvalidParameterError("pixel counts and supersample factor must be >= 1")

    def centers(self, supersample=None):
        """Pixel-centre coordinates ``(rho, z)`` as 1-D arrays.

        Sample points lying exactly on the plane ``z = 0`` are moved by half
        a sample spacing, where the channel series converges too slowly.
        """
        s = self.supersample if supersample is None else supersample
        nw, nh = self.width * s, self.height * s
        dr = (self.rho_max - self.rho_min) / nw
        dz = (self.z_max - self.z_min) / nh
        rho = self.rho_min + (np.arange(nw) + 0.5) * dr
        z = self.z_min + (np.arange(nh) + 0.5) * dz
        z = np.where(np.abs(z) < 1e-12 * max(1.0, abs(dz)), z + 0.5 * dz, z)
        return rho, z


def _readonly(a):
    a = np.array(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Field2D:
    grid: GridSpec
    payload: np.ndarray     # (H, W) or (3, H, W) for (rho, phi, z) components
    flags: np.ndarray       # (H, W) reason codes, 0 = ok
    quantity: Quantity
    method: Method
    epsilon: float
    policy: SummationPolicy | None
    integrated: bool = True

    def __post_init__(self):
        object.__setattr__(self, "payload", _readonly(self.payload))
        object.__setattr__(self, "flags", _readonly(self.flags))

    @property
    def is_vector(self):
        return self.payload.ndim == 3

    def component(self, k):
        """Scalar field holding component ``k`` (0 rho, 1 phi, 2 z) of a vector field."""
        if not self.is_vector:
            raise ContractViolation("component() needs a vector field")
        q = (Quantity.CURRENT_RHO, Quantity.CURRENT_PHI, Quantity.CURRENT_Z)[k]
        return Field2D(self.grid, self.payload[k], self.flags, q, self.method,
                       self.epsilon, self.policy, self.integrated)


@dataclass(frozen=True)
class Profile:
    rho: np.ndarray
    z: float
    values: np.ndarray      # (n,) or (3, n)
    flags: np.ndarray
    quantity: Quantity
    method: Method
    epsilon: float
    integrated: bool = True


# -- point evaluation ----------------------------------------------------------

def evaluate_points(method, eps, rho, z, policy=None, need_current=True):
    """Density, currents and flags on matching 1-D arrays of points.

    Returns a dict with keys ``density``, ``j_rho``, ``j_phi``, ``j_z``,
    ``flags``, ``pair_count`` and ``margin`` (the last two only for the
    orbit methods; they drive caustic detection between neighbours).
    """
    method = Method(method)
    rho = np.asarray(rho, float)
    z = np.asarray(z, float)
    if method is Method.QUANTUM:
        g, gr, gz, _, err = qm.green_arrays(rho, z, eps)
        out = {"density": np.abs(g) ** 2}
        if need_current:
            out["j_rho"], out["j_phi"], out["j_z"] = qm.current_arrays(g, gr, gz, rho, eps)
        out["flags"] = np.where(err > SERIES_FLAG_TOL, FLAG_SLOW_SERIES, FLAG_OK).astype(np.uint8)
        return out
    pol = policy or SummationPolicy()
    pol = SummationPolicy(method.value, pol.orbits, pol.ghosts)
    f = sc.evaluate(rho, z, eps, pol, with_current=need_current)
    out = {"density": f.density, "flags": f.flags, "pair_count": f.pair_count, "margin": f.margin}
    if need_current:
        out["j_rho"], out["j_phi"], out["j_z"] = f.j_rho, f.j_phi, f.j_z
    return out


def _payload(quantity, res, rho):
    if quantity is Quantity.DENSITY:
        return res["density"]
    if quantity is Quantity.CURRENT_Z:
        return res["j_z"]
    if quantity is Quantity.CURRENT_RHO:
        return res["j_rho"]
    if quantity is Quantity.CURRENT_PHI:
        return res["j_phi"]
    return np.stack([res["j_rho"], res["j_phi"], res["j_z"]])


def _neighbour_caustics(count, margin, axis):
    """Flag the sample nearer to the caustic wherever the real-pair set changes."""
    flag = np.zeros(count.shape, bool)
    a = [slice(None)] * count.ndim
    b = [slice(None)] * count.ndim
    a[axis] = slice(None, -1)
    b[axis] = slice(1, None)
    a, b = tuple(a), tuple(b)
    change = count[a] != count[b]
    first = change & (margin[a] <= margin[b])
    second = change & ~first
    flag[a] |= first
    flag[b] |= second
    return flag


def _row_task(args):
    method, eps, rho, zrows, policy, need_current = args
    R, Z = np.meshgrid(rho, zrows)
    res = evaluate_points(method, eps, R.ravel(), Z.ravel(), policy, need_current)
    return {k: v.reshape(R.shape) for k, v in res.items()}


def worker_count(requested=None):
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("MAGSOURCE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidParameterError(f"MAGSOURCE_THREADS must be an integer, got {env!r}")
    return 1


def _sample_rows(method, eps, rho, z, policy, need_current, workers):
    tasks = [(method, eps, rho, z[i:i + ROWS_PER_TASK], policy, need_current)
             for i in range(0, z.size, ROWS_PER_TASK)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_row_task, tasks))
    else:
        parts = [_row_task(t) for t in tasks]
    return {k: np.concatenate([p[k] for p in parts], axis=0) for k in parts[0]}


def _finalize_flags(flags, payload, res, method):
    flags = flags.astype(np.uint8)
    if method is Method.PRIMITIVE and "pair_count" in res:
        hit = (_neighbour_caustics(res["pair_count"], res["margin"], 0)
               | _neighbour_caustics(res["pair_count"], res["margin"], -1))
        flags |= np.where(hit, FLAG_CAUSTIC, 0).astype(np.uint8)
    bad = ~np.isfinite(payload)
    if bad.ndim == flags.ndim + 1:
        bad = bad.any(axis=0)
    flags |= np.where(bad, FLAG_NONFINITE, 0).astype(np.uint8)
    return flags


def _check_energy(method, eps):
    if method is Method.QUANTUM:
        qm.check_epsilon(eps)
    else:
        check_positive(eps)


def sample_map(quantity, method, eps, grid: GridSpec, policy=None, integrated=True, workers=None):
    """Evaluate ``quantity`` at every pixel centre of ``grid``.

    With ``supersample = s > 1`` an ``s x s`` block of samples is averaged
    into each pixel; reason codes of the block are combined.
    """
    quantity, method = Quantity(quantity), Method(method)
    _check_energy(method, eps)
    rho, z = grid.centers()
    res = _sample_rows(method, eps, rho, z, policy, quantity.needs_current, worker_count(workers))
    R = np.broadcast_to(rho[None, :], (z.size, rho.size))
    payload = _payload(quantity, res, R)
    if integrated:
        payload = 2.0 * math.pi * R * payload
    flags = _finalize_flags(res["flags"], payload, res, method)
    s = grid.supersample
    if s > 1:
        h, w = grid.height, grid.width
        if payload.ndim == 3:
            payload = payload.reshape(3, h, s, w, s).mean(axis=(2, 4))
        else:
            payload = payload.reshape(h, s, w, s).mean(axis=(1, 3))
        flags = np.bitwise_or.reduce(np.bitwise_or.reduce(flags.reshape(h, s, w, s), axis=3), axis=1)
    pol = None if method is Method.QUANTUM else (policy or SummationPolicy(method.value))
    return Field2D(grid, payload, flags, quantity, method, float(eps), pol, integrated)


def sample_profile(quantity, method, eps, z, rho, policy=None, integrated=True):
    """Radial profile of ``quantity`` at fixed ``z`` on the sorted grid ``rho``."""
    quantity, method = Quantity(quantity), Method(method)
    _check_energy(method, eps)
    rho = np.asarray(rho, float)
    if rho.ndim != 1 or rho.size < 1 or np.any(np.diff(rho) <= 0) or rho[0] < 0:
        raise InvalidParameterError("profile needs an increasing, non-negative rho grid")
    zz = np.full(rho.shape, float(z))
    res = evaluate_points(method, eps, rho, zz, policy, quantity.needs_current)
    values = _payload(quantity, res, rho)
    if integrated:
        values = 2.0 * math.pi * rho * values
    flags = _finalize_flags(res["flags"], values, res, method)
    return Profile(rho, float(z), values, flags, quantity, method, float(eps), integrated)


# -- image encoders ----------------------------------------------------------

def _scale(values, ok, normalization):
    if normalization == "max":
        good = np.abs(values[ok & np.isfinite(values)])
        if good.size == 0:
            good = np.abs(values[np.isfinite(values)])
        return float(good.max()) if good.size and good.max() > 0 else 1.0
    scale = float(normalization)
    if not scale > 0:
        raise InvalidParameterError("absolute normalization needs a positive scale")
    return scale


def _away_from_source(field):
    rho, z = field.grid.centers(1)
    R, Z = np.meshgrid(rho, z)
    return np.hypot(R, Z) >= SOURCE_EXCLUSION


def _divergent(field):
    return (field.flags & (FLAG_CAUSTIC | FLAG_NONFINITE)) != 0


def _level(field, gamma, normalization):
    v = np.abs(np.asarray(field.payload, float))
    div = _divergent(field)
    scale = _scale(v, ~div & _away_from_source(field), normalization)
    with np.errstate(invalid="ignore"):
        lev = np.clip(np.where(np.isfinite(v), v, 0.0) / scale, 0.0, 1.0) ** (1.0 / gamma)
    return np.where(div, 1.0, lev)


def _pnm(magic, pixels):
    h, w = pixels.shape[:2]
    head = f"{magic}\n{w} {h}\n255\n".encode("ascii")
    return head + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


def encode_grayscale(field: Field2D, gamma=1.0, normalization="max"):
    """8-bit PGM with dark = large ``|value|``; divergent pixels are black."""
    if field.is_vector:
        raise ContractViolation("grayscale encoding needs a scalar field")
    lev = _level(field, gamma, normalization)
    return _pnm("P5", np.rint(255.0 * (1.0 - lev)))


def encode_signed(field: Field2D, gamma=1.0, normalization="max"):
    """PPM on white: positive values shade towards dark blue, negative towards dark red."""
    if field.is_vector:
        raise ContractViolation("signed encoding needs a scalar field")
    lev = _level(field, gamma, normalization)
    v = np.asarray(field.payload, float)
    pos = np.where(np.isfinite(v), v, 0.0) >= 0
    dark = 255.0 * (1.0 - lev)
    half = 255.0 * (1.0 - 0.5 * lev)
    rgb = np.stack([np.where(pos, dark, half), dark, np.where(pos, half, dark)], axis=-1)
    return _pnm("P6", np.rint(rgb))


def hsv_to_rgb(h, s, v):
    """Vectorised HSV to RGB, all channels in [0, 1]."""
    h6 = (np.asarray(h) % 1.0) * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = v * (1 - s)
    q = v * (1 - s * f)
    t = v * (1 - s * (1 - f))
    choices = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    out = [np.select([i == k for k in range(6)], [c[ch] for c in choices]) for ch in range(3)]
    return np.stack(out, axis=-1)


def encode_flowmap(j_rho: Field2D, j_z: Field2D, normalization="max"):
    """PPM flow map: hue from ``atan2(j_z, j_rho)``, brightness ``sqrt(|j| / scale)``.

    Hue 0 (red) is flow towards larger rho, a quarter turn (yellow-green)
    towards larger z.  Divergent pixels are drawn at full brightness.
    """
    if j_rho.is_vector or j_z.is_vector:
        raise ContractViolation("flow map needs scalar rho and z components")
    if j_rho.grid != j_z.grid or j_rho.payload.shape != j_z.payload.shape:
        raise ContractViolation("flow map components live on different grids")
    a = np.asarray(j_rho.payload, float)
    b = np.asarray(j_z.payload, float)
    div = _divergent(j_rho) | _divergent(j_z)
    fin = np.isfinite(a) & np.isfinite(b)
    a0, b0 = np.where(fin, a, 0.0), np.where(fin, b, 0.0)
    mag = np.hypot(a0, b0)
    scale = _scale(mag, ~div & _away_from_source(j_rho), normalization)
    bright = np.where(div, 1.0, np.sqrt(np.clip(mag / scale, 0.0, 1.0)))
    hue = np.arctan2(b0, a0) / (2.0 * math.pi)
    rgb = hsv_to_rgb(hue, np.ones_like(hue), bright)
    return _pnm("P6", np.rint(255.0 * rgb))


def flowmap_of(field: Field2D, normalization="max"):
    """Flow map of a vector current field."""
    return encode_flowmap(field.component(0), field.component(2), normalization)


# -- CSV -----------------------------------------------------------------------

def flag_summary(flags):
    flags = np.asarray(flags)
    parts = [f"{name}={int(np.count_nonzero(flags & bit))}" for bit, name in FLAG_NAMES.items()]
    return "# flags: " + " ".join(parts)


def flag_reasons(code):
    code = int(code)
    if code == FLAG_OK:
        return "ok"
    return "|".join(name for bit, name in FLAG_NAMES.items() if code & bit)


def _fmt(v):
    return format(float(v), ".12g")


def _header(config):
    lines = [CSV_MAGIC]
    for k, v in (config or {}).items():
        lines.append(f"# {k}={v}")
    return lines


def format_csv(obj, config=None):
    """CSV text for a :class:`Field2D` or :class:`Profile` (rho fastest)."""
    lines = _header(config)
    lines.append(flag_summary(obj.flags))
    if isinstance(obj, Field2D):
        rho, z = obj.grid.centers(1)
        R, Z = np.meshgrid(rho, z)
        vals = obj.payload
    else:
        R = obj.rho[None, :]
        Z = np.full(R.shape, obj.z)
        vals = obj.values[..., None, :] if obj.values.ndim == 2 else obj.values[None, :]
    vector = vals.ndim == 3
    lines.append("rho_hat,z_hat,j_rho,j_phi,j_z" if vector else "rho_hat,z_hat,value")
    buf = io.StringIO()
    buf.write("\n".join(lines) + "\n")
    rr, zz = R.ravel(), Z.ravel()
    if vector:
        cols = [vals[k].ravel() for k in range(3)]
        for i in range(rr.size):
            buf.write(f"{_fmt(rr[i])},{_fmt(zz[i])},{_fmt(cols[0][i])},{_fmt(cols[1][i])},{_fmt(cols[2][i])}\n")
    else:
        vv = vals.ravel()
        for i in range(rr.size):
            buf.write(f"{_fmt(rr[i])},{_fmt(zz[i])},{_fmt(vv[i])}\n")
    return buf.getvalue()


def format_flags_csv(obj):
    """Flagged samples only: ``rho_hat,z_hat,reason``."""
    if isinstance(obj, Field2D):
        rho, z = obj.grid.centers(1)
        R, Z = np.meshgrid(rho, z)
    else:
        R = obj.rho
        Z = np.full(R.shape, obj.z)
    out = [CSV_MAGIC, "rho_hat,z_hat,reason"]
    for r, zz, f in zip(R.ravel(), Z.ravel(), np.asarray(obj.flags).ravel()):
        if f:
            out.append(f"{_fmt(r)},{_fmt(zz)},{flag_reasons(f)}")
    return "\n".join(out) + "\n"
