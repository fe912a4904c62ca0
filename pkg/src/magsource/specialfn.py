"""Laguerre polynomials and the Airy function Ai.

Both are evaluated with plain numpy so that whole grids of arguments can be
processed at once.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import DomainError

AIRY_WINDOW = 40.0
AI0 = 0.355028053887817239260063186004183176  # 3**(-2/3) / Gamma(2/3)
AIP0 = -0.258819403792806798405183560189203963  # -3**(-1/3) / Gamma(1/3)

# crossover points between Maclaurin and asymptotic evaluation
_NEG_SWITCH = -7.25
_POS_SWITCH = 5.5

_LOG_RESCALE = 230.0  # renormalise recurrences by e**230 ~ 1e100
_FOLD_THRESHOLD = 600.0  # fold e^{-u/2} logarithmically above this u


@dataclass(frozen=True)
class LaguerreTable:
    u: float
    values: np.ndarray
    derivatives: np.ndarray


def laguerre_all(n, u):
    """L_0(u)..L_n(u) and their derivatives by upward recurrence.

    Derivatives follow from ``u L'_l = l (L_l - L_{l-1})``; at ``u = 0`` the
    limit ``L'_l(0) = -l`` is used.
    """
    if n < 0 or u < 0:
        raise DomainError("laguerre_all needs n >= 0 and u >= 0")
    vals = np.empty(n + 1)
    vals[0] = 1.0
    if n >= 1:
        vals[1] = 1.0 - u
    for l in range(1, n):
        vals[l + 1] = ((2 * l + 1 - u) * vals[l] - l * vals[l - 1]) / (l + 1)
    ders = np.zeros(n + 1)
    ls = np.arange(1, n + 1)
    if u == 0:
        ders[1:] = -ls
    else:
        ders[1:] = ls * (vals[1:] - vals[:-1]) / u
    return LaguerreTable(float(u), vals, ders)


class LaguerreStepper:
    """Upward recurrence for ``w_l = e^{-u/2} L_l(u)`` and ``d_l = e^{-u/2} L^{(1)}_{l-1}(u)``.

    ``d_0 = 0``; the pair gives ``L'_l = -L^{(1)}_{l-1}``.  For ``u > 600`` the
    exponential is carried as a separate logarithmic scale so that neither
    factor overflows.  :meth:`restrict` drops points that no longer need
    higher orders.
    """

    def __init__(self, u):
        u = np.asarray(u, dtype=float)
        self.u = u
        self.l = 0
        fold = u > _FOLD_THRESHOLD
        self.folded = bool(fold.any())
        self.logscale = np.where(fold, -0.5 * u, 0.0)
        self.start = np.where(fold, 1.0, np.exp(-0.5 * u))
        self.a_prev = np.zeros_like(u)      # L_{l-1}
        self.a_cur = self.start.copy()      # L_l
        self.b_prev = np.zeros_like(u)      # L^(1)_{l-2}
        self.b_cur = np.zeros_like(u)       # L^(1)_{l-1}

    def values(self):
        if self.folded:
            scale = np.exp(self.logscale)
            return self.a_cur * scale, self.b_cur * scale
        return self.a_cur, self.b_cur

    def restrict(self, keep):
        for name in ("u", "logscale", "start", "a_prev", "a_cur", "b_prev", "b_cur"):
            setattr(self, name, getattr(self, name)[keep])

    def advance(self):
        l, u = self.l, self.u
        a_next = ((2 * l + 1 - u) * self.a_cur - l * self.a_prev) / (l + 1)
        if l == 0:
            b_next = self.start.copy()
        elif l == 1:
            b_next = (2.0 - u) * self.start
        else:
            m = l - 1  # b_cur = L^(1)_m, b_next = L^(1)_{m+1}
            b_next = ((2 * m + 2 - u) * self.b_cur - (m + 1) * self.b_prev) / (m + 1)
        self.a_prev, self.a_cur = self.a_cur, a_next
        self.b_prev, self.b_cur = self.b_cur, b_next
        self.l += 1
        if self.folded:
            big = np.maximum(np.abs(self.a_cur), np.abs(self.b_cur)) > 1e100
            if big.any():
                f = np.where(big, math.exp(-_LOG_RESCALE), 1.0)
                self.a_prev *= f
                self.a_cur *= f
                self.b_prev *= f
                self.b_cur *= f
                self.logscale = self.logscale + np.where(big, _LOG_RESCALE, 0.0)


def weighted_laguerre(u, count):
    """Yield ``(l, w_l, d_l)`` for ``l = 0..count-1``; see :class:`LaguerreStepper`."""
    st = LaguerreStepper(u)
    for l in range(count):
        w, d = st.values()
        yield l, w, d
        st.advance()


def _airy_maclaurin(x):
    x3 = x**3
    f = np.ones_like(x)
    g = x.copy()
    fp = np.zeros_like(x)
    gp = np.ones_like(x)
    t = np.ones_like(x)     # f terms
    s = 0.5 * x * x         # f' terms, k = 1
    uu = x.copy()           # g terms
    w = np.ones_like(x)     # g' terms
    for k in range(1, 200):
        t = t * x3 / ((3 * k) * (3 * k - 1))
        uu = uu * x3 / ((3 * k) * (3 * k + 1))
        if k > 1:
            s = s * x3 / (3 * (k - 1) * (3 * k - 1))
        w = w * x3 / ((3 * k) * (3 * k - 2))
        f += t
        g += uu
        fp += s
        gp += w
        if np.all(np.abs(t) + np.abs(uu) + np.abs(s) + np.abs(w) < 1e-18):
            break
    return AI0 * f + AIP0 * g, AI0 * fp + AIP0 * gp


def _asym_coeffs(n):
    u = [1.0]
    for k in range(1, n):
        u.append(u[-1] * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216.0 * k))
    v = [1.0] + [-(6 * k + 1) / (6 * k - 1) * u[k] for k in range(1, n)]
    return np.array(u), np.array(v)


_U, _V = _asym_coeffs(40)


def _truncated(coeffs, inv, signs):
    """Sum an asymptotic series, stopping at its smallest term."""
    total = np.zeros_like(inv)
    term_prev = np.full_like(inv, np.inf)
    active = np.ones(inv.shape, dtype=bool)
    power = np.ones_like(inv)
    for c, sg in zip(coeffs, signs):
        term = sg * c * power
        active &= np.abs(term) < np.abs(term_prev)
        total += np.where(active, term, 0.0)
        term_prev = term
        power = power * inv
    return total


def _airy_positive(x):
    zeta = (2.0 / 3.0) * x**1.5
    inv = 1.0 / zeta
    alt = [(-1) ** k for k in range(len(_U))]
    su = _truncated(_U, inv, alt)
    sv = _truncated(_V, inv, alt)
    pref = np.exp(-zeta) / (2.0 * math.sqrt(math.pi))
    return pref * su / x**0.25, -pref * sv * x**0.25


def _airy_negative(x):
    z = -x
    zeta = (2.0 / 3.0) * z**1.5
    inv2 = 1.0 / zeta**2
    # even and odd parts of the series, each alternating in sign
    ue, uo = _U[0::2], _U[1::2]
    ve, vo = _V[0::2], _V[1::2]
    alt = [(-1) ** k for k in range(len(ue))]
    Pu = _truncated(ue, inv2, alt)
    Qu = _truncated(uo, inv2, alt) / zeta
    Pv = _truncated(ve, inv2, alt)
    Qv = _truncated(vo, inv2, alt) / zeta
    ph = zeta - math.pi / 4
    c, s = np.cos(ph), np.sin(ph)
    rp = 1.0 / math.sqrt(math.pi)
    ai = rp * z**-0.25 * (c * Pu + s * Qu)
    aip = rp * z**0.25 * (s * Pv - c * Qv)
    return ai, aip


def airy_ai(x):
    """Return ``(Ai(x), Ai'(x))`` for real ``-40 <= x <= 40`` (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(np.abs(arr) > AIRY_WINDOW):
        raise DomainError(f"airy_ai is only defined on [-{AIRY_WINDOW:g}, {AIRY_WINDOW:g}]")
    flat = np.atleast_1d(arr).ravel()
    ai = np.empty_like(flat)
    aip = np.empty_like(flat)
    neg = flat < _NEG_SWITCH
    pos = flat > _POS_SWITCH
    mid = ~(neg | pos)
    if mid.any():
        ai[mid], aip[mid] = _airy_maclaurin(flat[mid])
    if neg.any():
        ai[neg], aip[neg] = _airy_negative(flat[neg])
    if pos.any():
        ai[pos], aip[pos] = _airy_positive(flat[pos])
    if arr.ndim == 0:
        return float(ai[0]), float(aip[0])
    return ai.reshape(arr.shape), aip.reshape(arr.shape)
