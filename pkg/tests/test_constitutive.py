import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from machlab.constitutive import (
    PressureLaw,
    ViscosityPair,
    pressure,
    pressure_potential,
    pressure_slope,
    relative_entropy,
    stress,
)
from machlab.errors import NegativeDensity

LAW = PressureLaw(coeff=1.0, gamma=2.0, rho_ref=1.0)


def potential_quadrature(law, rho):
    """Independent oracle: numerical quadrature of rho * int_1^rho p(z)/z^2 dz."""
    val, err = quad(lambda z: pressure(law, z) / z**2, 1.0, rho, epsabs=1e-14,
                    epsrel=1e-13)
    assert err < 1e-10
    return rho * val


def test_pressure_at_vacuum_is_zero():
    assert pressure(LAW, 0.0) == 0.0


def test_pressure_direct_substitution():
    assert pressure(LAW, 1.0) == pytest.approx(1.0, abs=0)
    assert pressure_slope(LAW, 1.0) == pytest.approx(2.0, abs=0)


def test_pressure_slope_ratio_constant_on_log_grid():
    # p'(rho)/rho^(gamma-1) should equal a*gamma = 2 for every density
    rhos = np.logspace(-3, 3, 25)
    ratio = pressure_slope(LAW, rhos) / rhos ** (LAW.gamma - 1.0)
    np.testing.assert_allclose(ratio, 2.0, rtol=1e-12)


def test_negative_density_rejected():
    with pytest.raises(NegativeDensity):
        pressure(LAW, -0.1)
    with pytest.raises(NegativeDensity):
        pressure_potential(LAW, np.array([0.5, -2.0]))


@pytest.mark.parametrize("gamma", [5.0 / 3.0, 2.0, 7.0 / 3.0])
@pytest.mark.parametrize("rho", [0.3, 0.9, 1.0, 2.0, 5.0])
def test_pressure_potential_matches_quadrature(gamma, rho):
    law = PressureLaw(coeff=1.3, gamma=gamma, rho_ref=1.0)
    exact = pressure_potential(law, rho)
    oracle = potential_quadrature(law, rho)
    assert exact == pytest.approx(oracle, rel=1e-10, abs=1e-12)


def test_pressure_potential_reference_values():
    # for a=1, gamma=2: P(rho) = rho^2 - rho, so P(2) = 2 and P(1) = 0
    assert pressure_potential(LAW, 2.0) == pytest.approx(2.0, rel=1e-14)
    assert pressure_potential(LAW, 1.0) == 0.0


def test_relative_entropy_quadratic_case():
    # gamma = 2, rho_ref = 1: E(rho|1) = (rho - 1)^2 exactly
    assert relative_entropy(LAW, 1.5) == pytest.approx(0.25, rel=1e-12)
    oracle = (
        potential_quadrature(LAW, 1.5)
        - (2.0 * 1.0 - 1.0) * 0.5  # P'(1) = a(gamma rho^(g-1) - 1)/(g-1) = 1
        - potential_quadrature(LAW, 1.0 + 1e-15)
    )
    assert relative_entropy(LAW, 1.5) == pytest.approx(oracle, rel=1e-9)


@given(st.floats(min_value=1e-3, max_value=50.0))
@settings(deadline=None, max_examples=200)
def test_relative_entropy_nonnegative(rho):
    e = relative_entropy(LAW, rho)
    assert e >= -1e-14
    if abs(rho - 1.0) > 1e-6:
        assert e > 0.0


@given(st.floats(min_value=-3.0, max_value=3.0),
       st.floats(min_value=1e-4, max_value=0.15))
@settings(deadline=None, max_examples=200)
def test_entropy_quadratic_scaling(s, eps):
    # eps^-2 E(1 + eps*s | 1) == s^2 for the quadratic law, up to the
    # floating-point cancellation floor of the eps^-2 rescaling
    val = relative_entropy(LAW, 1.0 + eps * s) / eps**2
    cancel = 8.0 * np.finfo(float).eps / eps**2
    assert abs(val - s * s) <= 1e-9 * max(1.0, s * s) + cancel


def test_stress_zero_and_identity():
    visc = ViscosityPair(shear=1.0, bulk=0.0)
    np.testing.assert_allclose(stress(visc, np.zeros((2, 2))), 0.0)
    s = stress(visc, np.eye(2))
    # div u = 2: S = (2 - 4/3) I = (2/3) I
    np.testing.assert_allclose(s, (2.0 / 3.0) * np.eye(2), rtol=1e-14)


def test_stress_kills_antisymmetric_part():
    visc = ViscosityPair(shear=1.7, bulk=0.0)
    anti = np.array([[0.0, 1.0], [-1.0, 0.0]])
    np.testing.assert_allclose(stress(visc, anti), 0.0, atol=1e-15)


@given(st.integers(min_value=0, max_value=10_000))
@settings(deadline=None, max_examples=100)
def test_stress_dissipative_on_random_tensors(seed):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((2, 2))
    visc = ViscosityPair(shear=0.5 + rng.random(), bulk=rng.random())
    assert float(np.sum(stress(visc, g) * g)) >= -1e-13


def test_stress_linear_and_field_shaped():
    visc = ViscosityPair(shear=0.3, bulk=0.1)
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 5, 2, 2))
    b = rng.standard_normal((4, 5, 2, 2))
    np.testing.assert_allclose(
        stress(visc, 2.0 * a + b), 2.0 * stress(visc, a) + stress(visc, b),
        rtol=1e-13, atol=1e-14,
    )


def test_law_validation():
    with pytest.raises(ValueError):
        PressureLaw(gamma=1.4)
    with pytest.raises(ValueError):
        PressureLaw(rho_ref=-1.0)
    with pytest.raises(ValueError):
        ViscosityPair(shear=0.0)
    with pytest.raises(ValueError):
        ViscosityPair(shear=1.0, bulk=-0.1)
