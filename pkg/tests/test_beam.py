import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from mbsa.beam import (BeamModel, BeamDomainError, StiffnessProfile, beam_grid, base_natural_frequency,
                       delta_omega_sq, mode_eigenvalue, mode_shape, modal_mass_integral, phi_bar,
                       rayleigh_frequency, simpson_weights)

# roots of 1 + cos(l) cosh(l) = 0, standard tabulated values
LAMBDA = {1: 1.8751040687, 2: 4.6940911330, 3: 7.8547574382}


@pytest.mark.parametrize("k", [1, 2, 3])
def test_mode_eigenvalues(k):
    assert mode_eigenvalue(k) == pytest.approx(LAMBDA[k], abs=1e-9)
    lam = mode_eigenvalue(k)
    assert abs(1 + np.cos(lam) * np.cosh(lam)) < 1e-8


def test_mode_index_validation():
    with pytest.raises(BeamDomainError):
        mode_eigenvalue(0)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_mode_shape_boundary_values(alu_beam, k):
    beam = BeamModel(alu_beam.length, alu_beam.rho_A, alu_beam.EI, mode_index=k)
    assert mode_shape(beam, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert abs(mode_shape(beam, beam.length)) == pytest.approx(2.0, rel=1e-10)


def test_mode_shape_outside_beam(alu_beam):
    with pytest.raises(BeamDomainError):
        mode_shape(alu_beam, -0.01)
    with pytest.raises(BeamDomainError):
        mode_shape(alu_beam, alu_beam.length * 1.01)


def test_mode_shape_matches_textbook_form(alu_beam):
    # direct cosh/cos form is fine for mode 1 where nothing overflows
    lam = LAMBDA[1]
    s = (np.cosh(lam) + np.cos(lam)) / (np.sinh(lam) + np.sin(lam))
    z = np.linspace(0, lam, 50)
    ref = np.cosh(z) - np.cos(z) - s * (np.sinh(z) - np.sin(z))
    got = mode_shape(alu_beam, z / lam * alu_beam.length)
    np.testing.assert_allclose(got, ref, rtol=1e-8, atol=1e-12)


def test_modes_orthogonal(alu_beam):
    b2 = BeamModel(alu_beam.length, alu_beam.rho_A, alu_beam.EI, mode_index=2)
    x, w = beam_grid(alu_beam, 4096)
    cross = w @ (mode_shape(alu_beam, x) * mode_shape(b2, x))
    assert abs(cross) < 1e-9 * alu_beam.length


@pytest.mark.parametrize("k", [1, 2])
def test_phi_bar_quarter(alu_beam, k):
    beam = BeamModel(alu_beam.length, alu_beam.rho_A, alu_beam.EI, mode_index=k)
    # independent adaptive quadrature oracle
    L = beam.length
    ref = quad(lambda x: (mode_shape(beam, x) / 2.0) ** 2, 0, L, epsrel=1e-13, limit=200)[0] / L
    assert phi_bar(beam) == pytest.approx(ref, rel=1e-9)
    assert phi_bar(beam) == pytest.approx(0.25, abs=1e-3)


def test_modal_integral_equals_length(alu_beam):
    assert modal_mass_integral(alu_beam) == pytest.approx(alu_beam.length, rel=1e-10)


def test_aluminium_beam_frequency(alu_beam):
    assert alu_beam.rho_A == pytest.approx(2700 * 21e-6)
    assert alu_beam.EI == pytest.approx(69e9 * 21e-3 * 1e-9 / 12)
    w = base_natural_frequency(alu_beam)
    assert w == pytest.approx(LAMBDA[1] ** 2 * np.sqrt(alu_beam.EI / (alu_beam.rho_A * 0.682 ** 4)), rel=1e-10)
    assert w == pytest.approx(11.0315, abs=1e-4)


@pytest.mark.parametrize("k", [1, 2])
def test_closed_form_frequency_matches_rayleigh(alu_beam, k):
    beam = BeamModel(alu_beam.length, alu_beam.rho_A, alu_beam.EI, mode_index=k)
    assert rayleigh_frequency(beam, 4096) == pytest.approx(base_natural_frequency(beam), rel=1e-8)


def test_simpson_weights_exact_for_cubic():
    x = np.linspace(0, 2, 9)
    w = simpson_weights(8, 0.25)
    assert w @ (x ** 3 - x) == pytest.approx(4.0 - 2.0, rel=1e-14)
    with pytest.raises(ValueError):
        simpson_weights(3, 0.1)


def test_constant_stiffness_shift(alu_beam):
    x, _ = beam_grid(alu_beam, 512)
    k0 = 3.7
    d = delta_omega_sq(alu_beam, StiffnessProfile(x, np.full_like(x, k0)))
    assert d == pytest.approx(k0 / alu_beam.rho_A, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2 ** 31))
def test_delta_omega_linear(a, b, seed):
    beam = BeamModel(1.0, 2.0, 3.0)
    x, _ = beam_grid(beam, 64)
    rng = np.random.default_rng(seed)
    k1, k2 = rng.normal(size=x.size), rng.normal(size=x.size)
    lhs = delta_omega_sq(beam, StiffnessProfile(x, a * k1 + b * k2))
    rhs = a * delta_omega_sq(beam, StiffnessProfile(x, k1)) + b * delta_omega_sq(beam, StiffnessProfile(x, k2))
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)


def test_profile_grid_validation(alu_beam):
    x = np.linspace(0, alu_beam.length, 10)
    with pytest.raises(BeamDomainError):
        delta_omega_sq(alu_beam, StiffnessProfile(x, np.ones(10)))  # odd interval count
    x = np.linspace(0, alu_beam.length / 2, 9)
    with pytest.raises(BeamDomainError):
        delta_omega_sq(alu_beam, StiffnessProfile(x, np.ones(9)))
    x = np.linspace(0, alu_beam.length, 9)
    with pytest.raises(BeamDomainError):
        delta_omega_sq(alu_beam, StiffnessProfile(x, np.ones(8)))


def test_tip_point_stiffness(alu_beam):
    # a narrow bump at the tip acts like a point spring: shift ~ k phi(L)^2 / (rho A int phi^2)
    x, w = beam_grid(alu_beam, 8192)
    k = np.zeros_like(x)
    k[-1] = 1.0 / w[-1]
    d = delta_omega_sq(alu_beam, StiffnessProfile(x, k))
    assert d == pytest.approx(4.0 / (alu_beam.rho_A * alu_beam.length), rel=1e-6)
