from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad

from delaygalerkin.errors import InvalidConfigError
from delaygalerkin.kernels import (DelayKernel, KernelBounds, ZeroKernel, bump, bump_profile, certify_bound_minus_half,
                                   certify_bound_zero, certify_ess_sup, certify_kernel, constant_in_state,
                                   constant_profile, cosine_profile, delay_selective, estimate_lipschitz,
                                   minus_half_refinement, time_profile_from_descriptor)
from delaygalerkin.phase_space import PhaseState, random_phase_state, theta_quadrature
from delaygalerkin.spectral import SpectralField, build_basis, fractional_norm, project_function


@pytest.fixture(scope="module")
def setup():
    basis = build_basis(1.0, 16)
    tq = theta_quadrature(1.0, 32)
    rng = np.random.default_rng(5)
    states = [random_phase_state(basis, tq, rng, 1.0) for _ in range(200)]
    return basis, tq, states


def ones_profile(basis):
    return project_function(lambda x: np.ones_like(x), basis)


class ScaledByNorm(DelayKernel):
    """``(1 + ||v||) chi(theta) w(x)``; Lipschitz constant ``int|chi| ||w||_{-1/2}``."""

    family = "test_scaled"

    def __init__(self, w, chi):
        super().__init__(w.m)
        self.w, self.chi = w, chi

    def profiles(self, thetas, state):
        return (1.0 + state.v.norm()) * np.outer(self.chi(thetas), self.w.coeffs)


def test_zero_kernel_certifies_to_zero(setup):
    basis, tq, states = setup
    k = ZeroKernel(16)
    assert certify_bound_minus_half(k, states, tq, basis) == 0.0
    assert certify_bound_zero(k, states, tq, basis) == 0.0
    assert certify_ess_sup(k, states, np.linspace(-1, 0, 101), basis) == 0.0
    assert estimate_lipschitz(k, 1.0, 50, 0, basis, tq) == 0.0


def test_unit_kernel_constants():
    # xi = 1 on (0,1) x [-1,0]; -1/2 norm of the constant is 1/sqrt(12) in the limit
    basis = build_basis(1.0, 256)
    tq = theta_quadrature(1.0)
    k = constant_in_state(ones_profile(basis), constant_profile(1.0))
    s = [PhaseState.constant(SpectralField.zeros(256), tq)]
    assert certify_bound_minus_half(k, s, tq, basis) == pytest.approx(1 / math.sqrt(12), rel=1e-6)
    assert certify_ess_sup(k, s, np.linspace(-1, 0, 11), basis) == pytest.approx(1 / math.sqrt(12), rel=1e-6)
    # L2 norm of the truncated series of 1 approaches 1 like 1 - O(1/m)
    assert certify_bound_zero(k, s, tq, basis) == pytest.approx(1.0, abs=2e-3)


@pytest.mark.parametrize("chi", [
    constant_profile(1.0, 2.5),
    bump_profile(1.0, -0.4, 0.3, mass=-1.7),
    cosine_profile(1.0, 0.3, 1.0, 2),
])
def test_separable_factorization(setup, chi):
    basis, tq, states = setup
    w = SpectralField(np.random.default_rng(1).standard_normal(16) / np.arange(1, 17))
    k = constant_in_state(w, chi)
    abs_disc = tq.integrate(np.abs(chi(tq.nodes)))
    assert certify_bound_minus_half(k, states[:5], tq, basis) == pytest.approx(
        abs_disc * fractional_norm(w, -0.5, basis), rel=1e-12)
    grid = np.linspace(-1, 0, 2001)
    assert certify_ess_sup(k, states[:3], grid, basis) == pytest.approx(
        np.abs(chi(grid)).max() * fractional_norm(w, -0.5, basis), rel=1e-12)
    assert estimate_lipschitz(k, 1.0, 50, 3, basis, tq) == 0.0


def test_bump_in_theta_with_unit_profile(setup):
    basis, tq, states = setup
    chi = bump_profile(1.0, -0.5, 0.25)
    fine = theta_quadrature(1.0, 4097)
    k = constant_in_state(SpectralField.mode(3, 16), chi)
    closed = quad(lambda t: abs(float(chi(np.array([t]))[0])), -1, 0, points=[-0.75, -0.25], epsabs=1e-13)[0]
    assert certify_bound_zero(k, states[:2], fine, basis) == pytest.approx(closed, rel=1e-8)


def test_constant_in_state_e1_chi_one(setup):
    basis, tq, states = setup
    k = constant_in_state(SpectralField.mode(1, 16), constant_profile(1.0))
    assert certify_bound_zero(k, states[:3], tq, basis) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("value", [0.0, 1e-13])
def test_time_profile_rejects_zero_integral(value):
    with pytest.raises(InvalidConfigError, match="nonzero integral"):
        constant_profile(1.0, value)


def test_time_profile_rejects_balanced_cosine():
    with pytest.raises(InvalidConfigError):
        cosine_profile(1.0, 0.0, 1.0)


def test_sign_changing_chi_accepted():
    chi = cosine_profile(1.0, 0.2, 1.0)
    assert chi.integral == pytest.approx(0.2)
    assert chi.abs_integral > chi.integral
    desc = chi.descriptor()
    again = time_profile_from_descriptor(desc, 1.0)
    np.testing.assert_array_equal(again(np.linspace(-1, 0, 9)), chi(np.linspace(-1, 0, 9)))


def test_bump_unit_mass_and_support():
    closed = quad(lambda t: float(bump(np.array([t]), -0.5, 0.125)[0]), -1, 0, points=[-0.625, -0.375],
                  epsabs=1e-12, epsrel=1e-12)[0]
    assert abs(closed - 1.0) < 1e-6
    assert bump(np.array([-0.625, -0.375, -0.2]), -0.5, 0.125).max() == 0.0


def test_delay_selective_fixed_delay_mass():
    basis = build_basis(1.0, 8)
    fine = theta_quadrature(1.0, 8193)
    w = ones_profile(basis)
    k = delay_selective(w, 1.0, 0.125, 0.5, 0.5)
    st_ = PhaseState.constant(SpectralField.mode(1, 8, 3.0), fine)
    integral = fine.weights @ k.profiles(fine.nodes, st_)
    np.testing.assert_allclose(integral, w.coeffs, atol=1e-6 * w.norm())


@pytest.mark.parametrize("tau_min,tau_max", [(0.05, 0.5), (0.2, 0.95), (0.6, 0.4)])
def test_delay_selective_rejects_range(tau_min, tau_max):
    basis = build_basis(1.0, 4)
    with pytest.raises(InvalidConfigError):
        delay_selective(ones_profile(basis), 1.0, 0.125, tau_min, tau_max)


def test_delay_selective_moves_with_norm():
    basis = build_basis(1.0, 4)
    tq = theta_quadrature(1.0, 257)
    k = delay_selective(ones_profile(basis), 1.0, 0.125)
    small = PhaseState.constant(SpectralField.zeros(4), tq)
    large = PhaseState.constant(SpectralField.mode(1, 4, 1e6), tq)
    peak = lambda s: tq.nodes[np.argmax(k.profiles(tq.nodes, s)[:, 0])]  # noqa: E731
    assert peak(small) == pytest.approx(-0.125, abs=1 / 256)
    assert peak(large) == pytest.approx(-0.875, abs=1 / 256)


def test_lipschitz_reverse_triangle_oracle(setup):
    basis, tq, _ = setup
    w = SpectralField.mode(2, 16, 1.0)
    w = w * (1.0 / fractional_norm(w, -0.5, basis))
    chi = bump_profile(1.0, -0.5, 0.25)
    k = ScaledByNorm(w, chi)
    mass = tq.integrate(np.abs(chi(tq.nodes)))
    few = estimate_lipschitz(k, 1.0, 20, 9, basis, tq)
    many = estimate_lipschitz(k, 1.0, 2000, 9, basis, tq)
    assert few <= many <= mass * (1 + 1e-12)
    assert many > 0.9 * mass


def test_estimate_lipschitz_rejects_radius(setup):
    basis, tq, _ = setup
    with pytest.raises(InvalidConfigError):
        estimate_lipschitz(ZeroKernel(16), 0.0, 5, 0, basis, tq)


def test_empty_state_sample(setup):
    basis, tq, _ = setup
    with pytest.raises(InvalidConfigError):
        certify_bound_minus_half(ZeroKernel(16), [], tq, basis)


BUILTINS = {
    "zero": lambda b: ZeroKernel(b.m),
    "constant_in_state_bump": lambda b: constant_in_state(ones_profile(b), bump_profile(1.0, -0.3, 0.2)),
    "constant_in_state_cosine": lambda b: constant_in_state(SpectralField.mode(2, b.m), cosine_profile(1.0, 0.3, 1.0)),
    "delay_selective": lambda b: delay_selective(ones_profile(b), 1.0, 0.125),
    "delay_selective_narrow": lambda b: delay_selective(ones_profile(b), 1.0, 0.05, 0.1, 0.9, 0.3),
}


@pytest.mark.parametrize("name", sorted(BUILTINS))
@pytest.mark.parametrize("rule,n", [("trapezoid", 32), ("simpson", 33)])
def test_builtin_kernels_certify(name, rule, n):
    basis = build_basis(1.0, 16)
    tq = theta_quadrature(1.0, n, rule)
    rep = certify_kernel(BUILTINS[name](basis), basis, tq, n_states=200, seed=2, n_pairs=200)
    assert rep.passed, rep.to_dict()
    assert all(math.isfinite(v) for v in rep.measured.values())


def test_declared_override_below_measured_fails():
    basis = build_basis(1.0, 16)
    tq = theta_quadrature(1.0)
    k = delay_selective(ones_profile(basis), 1.0, 0.125, declared=KernelBounds(c_minus_half=0.1))
    rep = certify_kernel(k, basis, tq, n_states=50, n_pairs=20)
    assert not rep.checks["c_minus_half"] and not rep.passed
    assert rep.checks["c_zero"]


def test_descriptor_roundtrip_fields():
    basis = build_basis(1.0, 4)
    k = delay_selective(ones_profile(basis), 1.0, 0.125, declared=KernelBounds(lipschitz=5.0))
    d = k.descriptor()
    assert d["family"] == "delay_selective" and d["declared"] == {"lipschitz": 5.0}
    assert len(d["profile"]) == 4


def test_minus_half_refinement_stable_for_constant_profile():
    norms, ratios = minus_half_refinement(ones_profile, 1.0, 16, levels=3)
    assert all(abs(r - 1.0) < 0.01 for r in ratios)
    assert norms[-1] == pytest.approx(1 / math.sqrt(12), rel=1e-4)


def test_profiles_deterministic(setup):
    basis, tq, states = setup
    k = delay_selective(ones_profile(basis), 1.0, 0.125)
    a = k.profiles(tq.nodes, states[0])
    b = k.profiles(tq.nodes, states[0])
    np.testing.assert_array_equal(a, b)
