import math

import pytest
from hypothesis import given, settings, strategies as st
from scipy import constants

from magsource.errors import InvalidParameterError
from magsource.scaling import (PhysicalParams, ScaledPoint, build_context, from_scaled,
                               params_for_epsilon, to_scaled)

HBAR = constants.hbar
ME = constants.m_e
QE = constants.e


def electron(field=1.0, energy_ev=1.0):
    return PhysicalParams(-QE, ME, field, energy_ev * QE)


def test_electron_in_one_tesla():
    ctx = build_context(electron())
    larmor = QE * 1.0 / (2 * ME)
    assert ctx.larmor == pytest.approx(larmor, rel=1e-14)
    assert ctx.speed == pytest.approx(math.sqrt(2 * QE / ME), rel=1e-14)
    assert ctx.epsilon == pytest.approx(QE / (HBAR * larmor), rel=1e-14)
    # 1 eV over half the cyclotron quantum at 1 T is roughly 17 thousand
    assert 1.7e4 < ctx.epsilon < 1.75e4


def test_length_unit_and_wavenumber_are_tied_by_epsilon():
    ctx = build_context(electron(field=0.3, energy_ev=2.5))
    assert ctx.wavenumber * ctx.length_unit == pytest.approx(2 * ctx.epsilon, rel=1e-13)


def test_natural_units_relations():
    ctx = build_context(electron(field=2.0, energy_ev=0.01))
    # current unit is density unit times v0; J_free = m k / (pi hbar^3)
    assert ctx.current_unit == pytest.approx(ctx.density_unit * ctx.speed, rel=1e-12)
    assert ctx.free_current == pytest.approx(ME * ctx.wavenumber / (math.pi * HBAR**3), rel=1e-14)


def test_free_current_follows_square_root_of_energy():
    a = build_context(electron(energy_ev=1.0)).free_current
    b = build_context(electron(energy_ev=4.0)).free_current
    assert b / a == pytest.approx(2.0, rel=1e-13)


def test_sign_of_charge_is_irrelevant():
    a = build_context(PhysicalParams(QE, ME, 1.0, QE))
    b = build_context(PhysicalParams(-QE, ME, 1.0, QE))
    assert a == b


@pytest.mark.parametrize("bad", [
    PhysicalParams(0.0, ME, 1.0, QE),
    PhysicalParams(QE, -ME, 1.0, QE),
    PhysicalParams(QE, ME, 0.0, QE),
    PhysicalParams(QE, ME, 1.0, -1.0),
    PhysicalParams(QE, ME, float("nan"), QE),
])
def test_rejects_nonpositive_parameters(bad):
    with pytest.raises(InvalidParameterError):
        build_context(bad)


def test_negative_radius_rejected():
    with pytest.raises(InvalidParameterError):
        ScaledPoint(-0.1, 0.0)


@settings(max_examples=60, deadline=None)
@given(eps=st.floats(0.1, 1e5), field=st.floats(1e-3, 50.0))
def test_params_for_epsilon_round_trip(eps, field):
    ctx = build_context(params_for_epsilon(eps, field=field))
    assert ctx.epsilon == pytest.approx(eps, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(rho=st.floats(0, 1e-5), z=st.floats(-1e-5, 1e-5))
def test_scaled_round_trip(rho, z):
    ctx = build_context(electron(field=0.5, energy_ev=0.2))
    back = from_scaled(to_scaled(rho, z, ctx), ctx)
    assert back[0] == pytest.approx(rho, rel=1e-12, abs=1e-30)
    assert back[1] == pytest.approx(z, rel=1e-12, abs=1e-30)
