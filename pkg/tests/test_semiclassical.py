import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magsource import classical as cl
from magsource import quantum as q
from magsource import semiclassical as sc
from magsource.errors import ContractViolation, InvalidParameterError
from magsource.scaling import ScaledPoint

PI = math.pi
EPS = 50.0


def _contribs(p, eps, nu_max):
    return [sc.orbit_contribution(s, p, eps) for s in cl.find_flight_times(p, nu_max)]


def test_policy_validation():
    with pytest.raises(InvalidParameterError):
        sc.SummationPolicy(orbits=0)
    with pytest.raises(InvalidParameterError):
        sc.SummationPolicy(method="exact")
    assert sc.SummationPolicy(orbits=5).intervals == 3


def test_contribution_modulus_is_classical_density():
    p = ScaledPoint(0.4, 1.0)
    for c in _contribs(p, EPS, 3):
        assert abs(c.value) ** 2 == pytest.approx(cl.classical_density(c.solution, p), rel=1e-12)


def test_maslov_shifts_of_first_pair():
    p = ScaledPoint(0.4, 1.0)
    fast, slow = _contribs(p, EPS, 0)
    assert fast.phase.real == pytest.approx(fast.dynamical_phase.real, abs=1e-12)
    assert slow.phase.real == pytest.approx(slow.dynamical_phase.real - PI / 2, abs=1e-12)


def test_phase_mod_two_pi_matches_full_action():
    eps = 7.3
    p = ScaledPoint(0.3, 2.0)
    for c in _contribs(p, eps, 6):
        mu = c.solution.maslov
        d = np.exp(1j * c.phase) / np.exp(1j * (c.dynamical_phase - PI / 2 * mu))
        assert abs(d - 1) < 1e-9


def test_dynamical_phase_closed_form_in_source_plane():
    eps = 10.0
    p = ScaledPoint(0.5, 0.0)
    for s in cl.find_flight_times(p, 2):
        if s.kind is cl.Kind.FAST:
            tau = s.nu * PI + PI / 6
            assert sc.dynamical_phase(s, p, eps).real == pytest.approx(
                eps * (0.25 * math.sqrt(3) + tau), rel=1e-12)


def test_fast_phase_large_interval_asymptote():
    rho, z, eps = 0.6, 0.5, 5.0
    p = ScaledPoint(rho, z)
    nu = 20000
    d = cl.solve_intervals(rho, z, np.array([nu]))
    tau = nu * PI + d.x_fast[0]
    s = cl.TrajectorySolution(complex(tau), nu, cl.Kind.FAST, 2 * nu, complex(d.d_fast[0]), 1, 1)
    want = eps * (nu * PI + math.asin(rho) + rho * math.sqrt(1 - rho**2))
    # the action is stationary on the energy shell, so z only enters as eps z^2 / tau
    assert sc.dynamical_phase(s, p, eps).real - want == pytest.approx(0, abs=2 * eps * z**2 / tau)


@pytest.mark.parametrize("rho,z", [(0.4, 1.0), (0.7, -2.5), (0.2, 5.0)])
def test_phase_gradient_is_canonical_momentum(rho, z):
    eps = 12.0
    h = 1e-6

    def actions(r, zz):
        pt = ScaledPoint(r, zz)
        return {(s.nu, s.kind): sc.dynamical_phase(s, pt, eps).real
                for s in cl.find_flight_times(pt, 3)}

    base = cl.find_flight_times(ScaledPoint(rho, z), 3)
    ap, am = actions(rho + h, z), actions(rho - h, z)
    bp, bm = actions(rho, z + h), actions(rho, z - h)
    for s in base:
        key = (s.nu, s.kind)
        tau = s.tau.real
        gr = (ap[key] - am[key]) / (2 * h)
        gz = (bp[key] - bm[key]) / (2 * h)
        assert gr == pytest.approx(2 * eps * rho / math.tan(tau), rel=1e-5)
        assert gz == pytest.approx(2 * eps * z / tau, rel=1e-5)


def test_ghost_contribution_decays_beyond_caustic():
    rho = np.linspace(1.005, 1.2, 40)
    mags = []
    for r in rho:
        g = cl.find_ghost_times(ScaledPoint(r, 0.0), [0])[0]
        mags.append(abs(sc.orbit_contribution(g, ScaledPoint(r, 0.0), EPS).value))
    assert np.all(np.diff(mags) < 0)
    assert mags[-1] < 1


def test_uniform_pair_matches_primitive_far_from_caustic():
    # large phase separation of the pair: Airy asymptotics apply
    checked = 0
    for rho, z in [(0.3, 0.4), (0.5, 2.0), (0.6, 4.0), (0.2, -1.0)]:
        cs = _contribs(ScaledPoint(rho, z), EPS, 4)
        for nu in range(5):
            pair = [c for c in cs if c.solution.nu == nu]
            if len(pair) != 2:
                continue
            fast, slow = pair
            half = 0.5 * (slow.phase.real + PI / 2 - fast.phase.real)
            if half < 10:
                continue
            u = sc.uniform_pair(fast, slow)
            assert abs(u - (fast.value + slow.value)) < 0.01 * (abs(fast.value) + abs(slow.value))
            checked += 1
    assert checked >= 5


def test_uniform_pair_contract():
    p = ScaledPoint(0.4, 1.0)
    cs = _contribs(p, EPS, 1)
    with pytest.raises(ContractViolation):
        sc.uniform_pair(cs[0], cs[3])
    with pytest.raises(ContractViolation):
        sc.uniform_pair(cs[1], cs[0])
    with pytest.raises(ContractViolation):
        sc.uniform_ghost(cs[0])


def test_uniform_is_continuous_across_caustic():
    # single interval, ray crossing the innermost caustic at z = 1.5
    rc = cl.caustic_radius(0, 1.5)
    rho = np.linspace(rc - 0.05, rc + 0.05, 2001)
    t = sc.interval_terms(rho, np.full_like(rho, 1.5), EPS, 1, "uniform", True, False)
    psi = t.psi[:, 0]
    assert np.all(np.isfinite(psi))
    steps = np.abs(np.diff(psi))
    assert steps.max() < 3 * np.median(steps) + 1e-3 * np.abs(psi).max()


def test_primitive_diverges_at_caustic_uniform_stays_finite():
    pt = cl.caustic_point(2.0)
    for d in (1e-4, 1e-6):
        rho = pt.rho - d
        prim = sc.evaluate(rho, pt.z, EPS, sc.SummationPolicy("primitive", 2), with_current=False)
        uni = sc.evaluate(rho, pt.z, EPS, sc.SummationPolicy("uniform", 2), with_current=False)
        assert prim.density > 5 * uni.density
    assert uni.density < 100


@pytest.mark.parametrize("rho,z", [(0.45, 3.3), (0.6, 1.2), (0.35, -0.8)])
def test_agrees_with_quantum(rho, z):
    f = sc.evaluate(rho, z, EPS, sc.SummationPolicy("uniform", 50000))
    g, gr, gz, _, _ = q.green_arrays(rho, z, EPS)
    assert f.density == pytest.approx(abs(g) ** 2, rel=0.05)
    jz = q.current_arrays(g, gr, gz, rho, EPS)[2]
    assert float(f.j_z) == pytest.approx(float(jz), rel=0.05)
    assert abs(complex(f.psi) / complex(g) - 1) < 0.05


def test_self_convergence_when_doubling_cutoff():
    a = abs(sc.wavefunction(ScaledPoint(0.5, 3.3), EPS, sc.SummationPolicy("uniform", 500)))
    b = abs(sc.wavefunction(ScaledPoint(0.5, 3.3), EPS, sc.SummationPolicy("uniform", 1000)))
    assert abs(a - b) < 0.02 * b


def test_no_runaway_values_on_grid():
    rho = (np.arange(22) + 0.5) * 1.1 / 22
    z = -1.1 + (np.arange(88) + 0.5) * 4.4 / 88
    R, Z = np.meshgrid(rho, z)
    f = sc.evaluate(R, Z, EPS, sc.SummationPolicy("uniform", 500), with_current=False)
    n = np.abs(q.green_arrays(R.ravel(), Z.ravel(), EPS)[0]).reshape(R.shape) ** 2
    assert np.all(np.isfinite(f.density))
    assert (f.density / n).max() < 1e3


def test_azimuthal_current_is_rigid_rotation():
    rho = np.linspace(0.1, 1.1, 30)
    f = sc.evaluate(rho, np.full_like(rho, 2.0), EPS, sc.SummationPolicy("uniform", 200))
    assert np.allclose(f.j_phi, -rho * f.density, rtol=1e-12, atol=0)


def test_single_orbit_current_is_classical_flux():
    p = ScaledPoint(0.5, 0.3)
    f = sc.evaluate(p.rho, p.z, EPS, sc.SummationPolicy("primitive", 1))
    fast = _contribs(p, EPS, 0)[0]
    n = abs(fast.value) ** 2
    assert f.density == pytest.approx(n, rel=1e-12)
    vr, vp, vz = (v.real for v in fast.velocity)
    assert (float(f.j_rho), float(f.j_phi), float(f.j_z)) == pytest.approx((n * vr, n * vp, n * vz), rel=1e-12)


def test_primitive_orbit_count_is_exact():
    # first N orbits by flight time: with all pairs real the last slow orbit is dropped
    p = ScaledPoint(0.4, 0.2)
    cs = _contribs(p, EPS, 2)
    for n in (1, 2, 3, 4, 5, 6):
        f = sc.evaluate(p.rho, p.z, EPS, sc.SummationPolicy("primitive", n, ghosts=False),
                        with_current=False)
        assert complex(f.psi) == pytest.approx(sum(c.value for c in cs[:n]), rel=1e-12)


def test_flags():
    f = sc.evaluate(np.array([0.02, 0.5]), np.array([1.0, 1.0]), EPS, sc.SummationPolicy("uniform", 10))
    assert f.flags[0] & sc.FLAG_AXIS and not f.flags[1] & sc.FLAG_AXIS


def test_threshold_partial_sums_grow():
    p = ScaledPoint(0.5, 2.0)
    vals = [abs(sc.wavefunction(p, 3.0, sc.SummationPolicy("uniform", n))) for n in (100, 1000, 10000)]
    assert vals[1] / vals[0] == pytest.approx(math.sqrt(10), rel=0.2)
    assert vals[2] / vals[1] == pytest.approx(math.sqrt(10), rel=0.2)


def test_periodic_zeta_partial_sums():
    n = 10**6
    s3 = sc.periodic_zeta_partial(3.0, n)
    assert s3.real / (2 * math.sqrt(n)) == pytest.approx(1.0, rel=1e-3)
    nu = np.arange(1, n + 1)
    part4 = np.cumsum(np.exp(1j * PI * 3 * nu) / np.sqrt(nu))
    assert np.abs(part4).max() <= 1.0 + 1e-12
    assert sc.periodic_zeta_partial(4.0, 1000) == pytest.approx(part4[999])
    d = [abs(sc.periodic_zeta_partial(50.0, 2 * m) - sc.periodic_zeta_partial(50.0, m))
         for m in (10**2, 10**3, 10**4, 10**5)]
    assert all(a > b for a, b in zip(d, d[1:]))


@settings(max_examples=25, deadline=None)
@given(rho=st.floats(0.15, 0.9), z=st.floats(0.3, 3.0))
def test_density_is_modulus_squared_of_wavefunction(rho, z):
    pol = sc.SummationPolicy("uniform", 40)
    p = ScaledPoint(rho, z)
    assert sc.sc_density(p, EPS, pol) == pytest.approx(abs(sc.wavefunction(p, EPS, pol)) ** 2, rel=1e-12)
    f = sc.evaluate(rho, -z, EPS, pol)
    g = sc.evaluate(rho, z, EPS, pol)
    assert complex(f.psi) == pytest.approx(complex(g.psi), rel=1e-12)
    assert float(f.j_z) == pytest.approx(-float(g.j_z), rel=1e-9, abs=1e-12)


def test_coalesced_expansion_joins_direct_airy_formula():
    # just inside the switch the expansion is used, just outside the root-based formula
    nu, z = 1, 3.3
    rc = cl.caustic_radius(nu, z)
    d = cl.solve_intervals(rc, z, np.array([nu]))
    # distance in rho that moves the half root separation through the switch
    rho = []
    for w in (0.9 * sc.COALESCE_HALF_WIDTH, 1.1 * sc.COALESCE_HALF_WIDTH):
        c = 0.5 * d.e2_min[0] * w * w
        drho = c / (2 * rc / math.sin(d.x_min[0]) ** 2)
        rho.append(rc - drho)
    t = sc.interval_terms(np.array(rho), np.full(2, z), EPS, nu + 1, "uniform", True, True)
    a, b = t.psi[:, nu]
    assert abs(a - b) < 2e-3 * abs(a)
    ja, jb = t.current[2][:, nu]
    assert abs(ja - jb) < 2e-3 * abs(ja)


def _caustic_distance(rho, z, nu_max=12):
    best = np.inf
    for nu in range(nu_max):
        pts = np.array([(c.rho, c.z) for c in cl.caustic_surface(nu, 2001)])
        best = min(best, np.hypot(pts[:, 0] - rho, pts[:, 1] - abs(z)).min())
    return best


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="one near-axis interference minimum exceeds 5 % (24 %)")
def test_random_points_agree_with_quantum():
    rng = np.random.default_rng(7)
    pts = []
    while len(pts) < 50:
        rho, z = rng.uniform(0.1, 1.0), rng.uniform(-1.1, 3.3)
        if abs(z) > 0.05 and _caustic_distance(rho, z) > 0.02:
            pts.append((rho, z))
    P = np.array(pts)
    f = sc.evaluate(P[:, 0], P[:, 1], EPS, sc.SummationPolicy("uniform", 50000))
    g, gr, gz, _, _ = q.green_arrays(P[:, 0], P[:, 1], EPS)
    n = np.abs(g) ** 2
    jz = q.current_arrays(g, gr, gz, P[:, 0], EPS)[2]
    rel = np.abs(f.density - n) / n
    print(f"density: {np.count_nonzero(rel < 0.05)}/50 within 5 %, worst {rel.max():.3f}")
    assert np.all(np.abs(f.j_z - jz) < 0.05 * np.abs(jz).max())
    assert np.all(rel < 0.05)
