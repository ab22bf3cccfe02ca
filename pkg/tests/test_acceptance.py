"""Acceptance gate: one PASS/FAIL line per criterion in the terminal summary.

Run with ``pytest tests/test_acceptance.py -v``; the lines appear under
"acceptance criteria" at the end of the session.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from delaygalerkin.diagnostics import (audit_certificates, certified_constants, continuous_dependence,
                                       delay_bound_violations, dissipativity_probe, method_of_steps_oracle,
                                       observed_orders, self_convergence)
from delaygalerkin.kernels import (KernelBounds, ZeroKernel, bump_profile, certify_kernel, constant_in_state,
                                   cosine_profile, delay_selective)
from delaygalerkin.model import Nonlinearity, SpatialKernel, make_model
from delaygalerkin.phase_space import random_initial_data
from delaygalerkin.presets import PRESET_NAMES, constant_profile_field, nicholson
from delaygalerkin.solver import simulate
from delaygalerkin.spectral import SpectralField, project_function
from delaygalerkin.synthesis import EquilibriumSpec, build_stationary_kernel, sine_target, verify_stationary

R = 1.0


def bubble(x):
    return 2.0 * x * (1.0 - x)


# --------------------------------------------------------------------------- 1


def test_criterion_1_energy_certificate(criterion):
    T = 5 * R
    worst = {}
    floors = {}
    inverted_failures = 0
    for dt in (R / 512, R / 1024):
        cfg = nicholson(dt=dt)
        consts = certified_constants(cfg)
        wrong = consts.scaled(1 / math.sqrt(10))
        rng = np.random.default_rng(2024)
        margins, tols = [], []
        for _ in range(20):
            u0, phi = random_initial_data(cfg.basis, cfg.theta, rng, 1.0)
            traj = simulate(cfg, u0, phi, T)
            rep = audit_certificates(traj, cfg, consts)
            margins.append(rep.worst()["energy"])
            tols.append(rep.tol)
            if dt == R / 512 and not audit_certificates(traj, cfg, wrong).checks()["energy"]:
                inverted_failures += 1
        worst[dt] = min(margins)
        floors[dt] = max(tols)
    coarse, fine = worst[R / 512], worst[R / 1024]
    # margins are exact up to rounding here, so "improves linearly" reads: the violation halves or sits at the floor
    violation = {dt: max(0.0, -w) for dt, w in worst.items()}
    improves = violation[R / 1024] <= max(0.5 * violation[R / 512], floors[R / 1024])
    ok = coarse >= -1e-6 and improves and inverted_failures == 20
    detail = (f"worst energy margin {coarse:.3e} (dt=r/512), {fine:.3e} (dt=r/1024); "
              f"improves={improves}; k1/10 audit fails on {inverted_failures}/20 runs")
    assert criterion(1, ok, detail), detail


# --------------------------------------------------------------------------- 2


def test_criterion_2_delay_term_bounds(criterion):
    parts, ok = [], True
    for name in PRESET_NAMES:
        out = delay_bound_violations(nicholson(name), 500, seed=11)
        n = out["violations_minus_half"] + out["violations_zero"]
        ok &= n == 0 and math.isfinite(out["max_ratio_minus_half"]) and math.isfinite(out["max_ratio_zero"])
        parts.append(f"{name}: {n} violations, max ratios {out['max_ratio_minus_half']:.3f} / "
                     f"{out['max_ratio_zero']:.3f}")
    detail = "500 pairs; " + "; ".join(parts)
    assert criterion(2, ok, detail), detail


# --------------------------------------------------------------------------- 3


KAPPA, Y0 = 10.0, 5e-4


def oracle_setup():
    chi = bump_profile(R, -0.75 * R, 0.25 * R)

    def build(dt):
        return make_model(L=1.0, m=1, quad_order=64, d=1.0, r=R, dt=dt, b=Nonlinearity("tanh", KAPPA),
                          f=SpatialKernel("constant", 1.0),
                          kernel=lambda basis, tq: constant_in_state(SpectralField([1.0]), chi))

    cfg = build(R / 1024)
    tq = cfg.theta
    weights = tq.weights * chi(tq.nodes)
    active = weights != 0.0
    lags = -tq.nodes[active]
    w = weights[active]
    # with xi = chi(theta) e1(x) and f = 1 the mode-1 forcing is sum_j w_j chi_j int kappa tanh(y_j e1(z)) dz
    z, zw = np.polynomial.legendre.leggauss(40)
    z, zw = 0.5 * (z + 1.0), 0.5 * zw
    shape = math.sqrt(2.0) * np.sin(np.pi * z)

    def g(past):
        B = (KAPPA * np.tanh(past[..., None] * shape)) @ zw
        return B @ w

    a = math.pi**2 + 1.0
    return build, a, lags, g


def test_criterion_3_oracle_equivalence(criterion):
    build, a, lags, g = oracle_setup()
    T = 3 * R
    history = lambda s: np.full_like(np.asarray(s, dtype=float), Y0)  # noqa: E731
    oracle = method_of_steps_oracle(a, R, history, g, T, R / 1024, lags=lags)
    errors = []
    for dt in (R / 256, R / 512, R / 1024):
        traj = simulate(build(dt), SpectralField([Y0]), None, T)
        errors.append(float(np.abs(traj.coeffs[:, 0] - oracle(traj.times)).max()))
    orders = observed_orders(errors)
    ok = errors[-1] < 1e-6 and all(0.8 <= p <= 1.2 for p in orders)
    detail = (f"sup error {errors[0]:.2e}, {errors[1]:.2e}, {errors[2]:.2e} at dt = r/256, r/512, r/1024; "
              f"observed orders {orders[0]:.3f}, {orders[1]:.3f}")
    assert criterion(3, ok, detail), detail


# --------------------------------------------------------------------------- 4


def test_criterion_4_stationary_synthesis(criterion):
    parts, ok = [], True
    for name in PRESET_NAMES:
        cfg = nicholson(name, dt=R / 1024)
        specs = [EquilibriumSpec(sine_target(k, s, cfg.basis), bump_profile(R, -0.5 * R, 0.25 * R), f"mode{k}")
                 for k, s in ((1, 0.5), (2, 1.0), (3, 2.0))]
        kernel = build_stationary_kernel(specs, cfg, rho=0.3)
        cfg = dataclasses.replace(cfg, kernel=kernel)
        for spec in specs:
            rep = verify_stationary(kernel, spec, cfg, 10 * R)
            ok &= rep.relative_residual < 1e-8 and rep.residual < 1e-8 and rep.max_drift < 1e-4
            parts.append(f"{name}/{spec.label}: residual {rep.residual:.1e}, drift {rep.max_drift:.1e}")
    detail = "; ".join(parts)
    assert criterion(4, ok, detail), detail


# --------------------------------------------------------------------------- 5


def test_criterion_5_continuous_dependence(criterion):
    parts, ok = [], True
    for name in PRESET_NAMES:
        cfg = nicholson(name)
        u0 = project_function(bubble, cfg.basis)
        out = continuous_dependence(cfg, u0, None, [1e-2, 1e-3, 1e-4], 5 * R, seed=0)
        ratios = out["ratios"] + out["final_ratios"]
        ok &= len(ratios) == 4 and all(8.0 <= q <= 12.0 for q in ratios)
        a = simulate(cfg, u0, None, 5 * R)
        b = simulate(cfg, u0, None, 5 * R)
        zero = continuous_dependence(cfg, u0, None, [0.0], 5 * R, seed=0)["response"][0]
        same = float(np.abs(a.coeffs - b.coeffs).max())
        ok &= same <= 1e-12 and zero <= 1e-12
        parts.append(f"{name}: sup ratios {', '.join(f'{q:.2f}' for q in out['ratios'])}, final-time ratios "
                     f"{', '.join(f'{q:.2f}' for q in out['final_ratios'])}, eps=0 difference {max(same, zero):.1e}")
    detail = "; ".join(parts)
    assert criterion(5, ok, detail), detail


# --------------------------------------------------------------------------- 6


def test_criterion_6_dissipativity(criterion):
    parts, ok = [], True
    for name in PRESET_NAMES:
        cfg = nicholson(name, dt=R / 256)
        rep = dissipativity_probe(cfg, [1.0, 10.0, 100.0], 50 * R, seed=0)
        ok &= rep["passed"]
        res = rep["results"]
        parts.append(f"{name}: entry times " + ", ".join(
            f"{e['entry_time']:.4f}" if e["entry_time"] is not None else e["status"] for e in res)
            + f", peak after entry {max((e['max_after_entry'] or 0.0) for e in res):.4f} x level")
    detail = "; ".join(parts)
    assert criterion(6, ok, detail), detail


# --------------------------------------------------------------------------- 7


def builtin_kernels(basis):
    ones = constant_profile_field(1.0)(basis)
    return {
        "zero": ZeroKernel(basis.m),
        "constant_in_state/bump": constant_in_state(ones, bump_profile(R, -0.3, 0.2)),
        "constant_in_state/cosine": constant_in_state(SpectralField.mode(2, basis.m), cosine_profile(R, 0.3, 1.0)),
        "delay_selective": delay_selective(ones, R, R / 8),
    }


def test_criterion_7_kernel_certification(criterion):
    failures, count = [], 0
    for name in PRESET_NAMES:
        cfg = nicholson(name)
        kernels = builtin_kernels(cfg.basis)
        specs = [EquilibriumSpec(sine_target(k, s, cfg.basis), bump_profile(R), f"mode{k}")
                 for k, s in ((1, 0.5), (2, 1.0), (3, 2.0))]
        kernels["synthesized"] = build_stationary_kernel(specs, cfg, rho=0.3)
        for label, k in kernels.items():
            anchors = k.anchors() if hasattr(k, "anchors") else None
            rep = certify_kernel(k, cfg.basis, cfg.theta, n_states=200, seed=5, n_pairs=200, anchors=anchors,
                                 spread=1.5 * k.rho if anchors else None)
            count += 1
            if not (rep.passed and all(math.isfinite(v) for v in rep.measured.values())):
                failures.append(f"{name}/{label}")
    # inverted contract: a declared bound below the measured value must be caught
    cfg = nicholson()
    k = delay_selective(constant_profile_field(1.0)(cfg.basis), R, R / 8, declared=KernelBounds(c_minus_half=0.1))
    inverted = certify_kernel(k, cfg.basis, cfg.theta, n_states=50, seed=5, n_pairs=20)
    # and so must a certificate audit run with k1 / 10
    traj = simulate(cfg, project_function(bubble, cfg.basis), None, 5 * R)
    audit = audit_certificates(traj, cfg, certified_constants(cfg).scaled(1 / math.sqrt(10)))
    ok = not failures and not inverted.passed and not audit.passed
    detail = (f"{count - len(failures)}/{count} kernels certified"
              + (f" (failed: {', '.join(failures)})" if failures else "")
              + f"; inverted declaration rejected={not inverted.passed}; k1/10 audit rejected={not audit.passed}")
    assert criterion(7, ok, detail), detail


# --------------------------------------------------------------------------- 8


def test_criterion_8_galerkin_self_convergence(criterion):
    parts, ok = [], True
    for name in PRESET_NAMES:
        out = self_convergence(lambda m: nicholson(name, m=m), [4, 8, 16, 32], bubble, 5 * R)
        ok &= out["strictly_decreasing"]
        parts.append(f"{name}: " + ", ".join(f"{d:.2e}" for d in out["differences"]))
    detail = "||u^m(T) - u^2m(T)|| for m = 4, 8, 16, 32: " + "; ".join(parts)
    assert criterion(8, ok, detail), detail

