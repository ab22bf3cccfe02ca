from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaygalerkin.errors import DomainError, InvalidConfigError, InvalidStateError
from delaygalerkin.phase_space import (HistorySegment, PhaseState, h_distance, h_norm, random_phase_state,
                                       sample_history, state_from_samples, theta_quadrature)
from delaygalerkin.spectral import SpectralField, build_basis


@pytest.mark.parametrize("rule,n", [("trapezoid", 32), ("trapezoid", 2), ("simpson", 33)])
@pytest.mark.parametrize("r", [0.5, 1.0, 3.0])
def test_theta_rule_integrates_constants(rule, n, r):
    tq = theta_quadrature(r, n, rule)
    assert tq.nodes[0] == -r and tq.nodes[-1] == 0.0
    assert tq.integrate(np.ones(n)) == pytest.approx(r, rel=1e-14)


def test_theta_rule_rejects():
    with pytest.raises(InvalidConfigError):
        theta_quadrature(1.0, 32, "simpson")
    with pytest.raises(InvalidConfigError):
        theta_quadrature(-1.0)
    with pytest.raises(InvalidConfigError):
        theta_quadrature(1.0, 1)


def test_constant_history():
    c = SpectralField([0.3, -1.0, 2.0])
    h = HistorySegment.constant(c, 1.0, t_now=4.0, n=5)
    for th in (-1.0, -0.37, 0.0):
        np.testing.assert_array_equal(sample_history(h, th).coeffs, c.coeffs)


def test_head_is_latest_entry():
    h = HistorySegment.for_step(1.0, 2, 0.25)
    for i in range(10):
        h.append(0.25 * i, [i, -i])
    np.testing.assert_array_equal(sample_history(h, 0.0).coeffs, [9.0, -9.0])
    np.testing.assert_array_equal(h.head().coeffs, [9.0, -9.0])


def test_linear_history_reproduced_between_nodes():
    dt = 1.0 / 64
    h = HistorySegment.for_step(1.0, 1, dt)
    for i in range(200):
        h.append(i * dt, [i * dt])
    for th in np.linspace(-1.0, 0.0, 37):
        assert sample_history(h, th).coeffs[0] == pytest.approx(h.t_now + th, abs=1e-13)


def test_ring_buffer_evicts_and_stays_contiguous():
    h = HistorySegment.for_step(1.0, 1, 0.25)
    assert h.capacity == 6
    for i in range(20):
        h.append(0.25 * i, [float(i)])
    assert len(h) == 6
    np.testing.assert_array_equal(h.times, 0.25 * np.arange(14, 20))
    assert h.covers()


def test_domain_and_coverage_errors():
    h = HistorySegment.for_step(1.0, 1, 0.25)
    h.append(0.0, [0.0])
    h.append(0.25, [1.0])
    with pytest.raises(InvalidStateError):
        h.sample(-0.5)
    for i in range(2, 6):
        h.append(0.25 * i, [float(i)])
    with pytest.raises(DomainError):
        h.sample(0.1)
    with pytest.raises(DomainError):
        h.sample(-1.5)
    with pytest.raises(InvalidStateError):
        h.append(1.25, [0.0])


def test_snapshot_is_independent():
    h = HistorySegment.constant(SpectralField([1.0]), 1.0)
    s = h.snapshot()
    h.append(2.0, [5.0])
    assert s.t_now == 0.0 and s.head().coeffs[0] == 1.0


@pytest.mark.parametrize("n", [32, 64])
def test_interpolation_error_decreases_with_dt(n):
    f = lambda t: np.sin(3.0 * t) + t**2  # noqa: E731
    errs = []
    for dt in (1 / n, 1 / (2 * n)):
        ts = np.arange(0.0, 2.0 + dt / 2, dt)
        h = HistorySegment.from_samples(ts, f(ts)[:, None], 1.0)
        th = np.linspace(-1.0, 0.0, 101)
        errs.append(np.abs(h.sample_many(th)[:, 0] - f(h.t_now + th)).max())
    assert errs[0] / errs[1] >= 2.0 * 0.95


def test_h_norm_examples():
    tq = theta_quadrature(1.0)
    zero = PhaseState.constant(SpectralField.zeros(3), tq)
    assert h_norm(zero, tq) == 0.0
    e1 = SpectralField.mode(1, 3)
    only_v = state_from_samples(e1, np.zeros((tq.n, 3)), tq)
    # the last history sample coincides with v, so it carries half a trapezoid cell
    hv = HistorySegment.from_samples(np.linspace(-1, 0, 5), np.zeros((5, 3)), 1.0)
    assert h_norm(PhaseState(e1, hv), tq) == pytest.approx(1.0, abs=1e-15)
    assert h_norm(only_v, tq) > 1.0
    only_psi = PhaseState(SpectralField.zeros(3), HistorySegment.constant(e1, 1.0))
    assert h_norm(only_psi, tq) == pytest.approx(1.0, rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 10.0), st.floats(-5.0, 5.0))
def test_h_norm_is_a_norm(seed, radius, alpha):
    b = build_basis(1.0, 6)
    tq = theta_quadrature(1.5, 17)
    rng = np.random.default_rng(seed)
    s1 = random_phase_state(b, tq, rng, radius)
    s2 = random_phase_state(b, tq, rng, radius)
    s3 = random_phase_state(b, tq, rng, radius)
    n1 = h_norm(s1, tq)
    scaled = state_from_samples(s1.v * alpha, s1.psi_at(tq) * alpha, tq)
    assert h_norm(scaled, tq) == pytest.approx(abs(alpha) * n1, rel=1e-12, abs=1e-12)
    assert h_distance(s1, s3, tq) <= h_distance(s1, s2, tq) + h_distance(s2, s3, tq) + 1e-12


def test_random_phase_state_respects_radius():
    b = build_basis(1.0, 8)
    tq = theta_quadrature(1.0)
    rng = np.random.default_rng(0)
    norms = [h_norm(random_phase_state(b, tq, rng, 2.0), tq) for _ in range(50)]
    assert max(norms) <= 2.0 + 1e-12
    exact = random_phase_state(b, tq, rng, 2.0, exact_radius=True)
    assert h_norm(exact, tq) == pytest.approx(2.0, rel=1e-12)


def test_psi_cache_invalidated_by_append():
    tq = theta_quadrature(1.0, 5)
    h = HistorySegment.constant(SpectralField([1.0]), 1.0, n=5)
    st_ = PhaseState(SpectralField([1.0]), h)
    first = st_.psi_at(tq).copy()
    h.append(0.25, [3.0])
    assert not np.array_equal(first, st_.psi_at(tq))
    assert math.isclose(st_.psi_at(tq)[-1, 0], 3.0)
