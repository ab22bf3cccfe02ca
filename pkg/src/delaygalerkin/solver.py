"""Galerkin time stepping for the delay equation

    u_t + A u + d u = int_{-r}^0 ( int_Omega b(u(t+theta, y)) f(x - y) dy ) xi(theta, x, u(t), u_t) dtheta.

The ``m`` retained modes are advanced with the exponential Euler scheme

    g_k(t + dt) = exp(-mu_k dt) g_k(t) + (1 - exp(-mu_k dt)) / mu_k * F_k(t),   mu_k = lambda_k + d,

with the delay term ``F`` evaluated once per step from the stored history.
Within a step the update is the exact solution of ``g' = -mu g + F``, so the
energy integrals of the scheme can be accumulated in closed form.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, NumericalBlowupError
from .model import ModelConfig
from .phase_space import HistorySegment, PhaseState
from .spectral import SpectralField


@dataclass(eq=False)
class Trajectory:
    """Coefficients on a uniform time grid plus per-step diagnostics.

    ``forcing[n]`` is the delay term used on step ``n``; ``int_h1[n]`` and
    ``int_l2[n]`` are the exact integrals of ``||A^{1/2} u||^2`` and ``||u||^2``
    over that step.
    """

    times: np.ndarray
    coeffs: np.ndarray
    forcing: np.ndarray
    int_h1: np.ndarray
    int_l2: np.ndarray
    lam: np.ndarray
    d: float
    history: HistorySegment | None = field(default=None, repr=False)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    @property
    def norm_l2(self) -> np.ndarray:
        return np.sqrt(np.einsum("ij,ij->i", self.coeffs, self.coeffs))

    @property
    def norm_h1(self) -> np.ndarray:
        """``||A^{1/2} u(t)||``."""
        return np.sqrt((self.coeffs**2) @ self.lam)

    def energy_functional(self) -> np.ndarray:
        """``||u(t)||^2 + int_0^t (||A^{1/2}u||^2 + 2 d ||u||^2)`` on the grid."""
        acc = np.concatenate([[0.0], np.cumsum(self.int_h1 + 2.0 * self.d * self.int_l2)])
        return self.norm_l2**2 + acc

    def final(self) -> SpectralField:
        return SpectralField(self.coeffs[-1].copy())

    def field_at(self, n: int) -> SpectralField:
        return SpectralField(self.coeffs[n].copy())

    def to_csv(self, path) -> None:
        m = self.coeffs.shape[1]
        l2, h1 = self.norm_l2, self.norm_h1
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "norm_l2", "norm_h1"] + [f"c{k}" for k in range(1, m + 1)])
            for i, t in enumerate(self.times):
                w.writerow([_fmt(t), _fmt(l2[i]), _fmt(h1[i])] + [_fmt(c) for c in self.coeffs[i]])


def _fmt(x) -> str:
    return format(float(x), ".17g")


def step_integrals(g: np.ndarray, F: np.ndarray, mu: np.ndarray, dt: float) -> np.ndarray:
    """Per-mode ``int_0^dt g_k(s)^2 ds`` for ``g' = -mu g + F`` started at ``g``."""
    beta = F / mu
    a = g - beta
    e1 = -np.expm1(-mu * dt) / mu
    e2 = -np.expm1(-2.0 * mu * dt) / (2.0 * mu)
    return a * a * e2 + 2.0 * a * beta * e1 + beta * beta * dt


class GalerkinSolver:
    """Precomputed operators for one :class:`ModelConfig`."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        basis = cfg.basis
        self.mu = basis.lam + cfg.d
        self.decay = np.exp(-self.mu * cfg.dt)
        self.phi1 = -np.expm1(-self.mu * cfg.dt) / self.mu
        self.modes = basis.modes
        self.analysis = basis.analysis
        x = basis.quad_nodes
        self.conv = cfg.f(x[:, None] - x[None, :]) * basis.quad_weights[None, :]
        self.tq = cfg.theta

    # -- delay term -------------------------------------------------------

    def delay_integrand(self, state: PhaseState) -> tuple[np.ndarray, np.ndarray]:
        """Node values of ``g(theta_j, x)`` (convolved birth rate) and ``xi(theta_j, x)``."""
        hist = state.psi_at(self.tq)
        births = self.cfg.b(hist @ self.modes)
        g = births @ self.conv.T
        xi = self.cfg.kernel.profiles(self.tq.nodes, state) @ self.modes
        return g, xi

    def forcing(self, state: PhaseState) -> np.ndarray:
        # overflow surfaces as non-finite values, which the stepping loops report as blowup
        with np.errstate(over="ignore", invalid="ignore"):
            g, xi = self.delay_integrand(state)
            fx = self.tq.weights @ (g * xi)
            return self.analysis @ fx

    def eval_F(self, state: PhaseState) -> SpectralField:
        return SpectralField(self.forcing(state))

    # -- stepping ---------------------------------------------------------

    def advance(self, g: np.ndarray, F: np.ndarray) -> np.ndarray:
        return self.decay * g + self.phi1 * F

    def step(self, state: PhaseState) -> SpectralField:
        """Advance ``state`` by one step in place and return the new field."""
        t = state.psi.t_now
        F = self.forcing(state)
        if not np.all(np.isfinite(F)):
            raise NumericalBlowupError(t)
        new = self.advance(state.v.coeffs, F)
        if not np.all(np.isfinite(new)):
            raise NumericalBlowupError(t + self.cfg.dt)
        state.psi.append(t + self.cfg.dt, new)
        state.v = SpectralField(new)
        state.invalidate()
        return SpectralField(new.copy())

    def prime_history(self, u0: SpectralField, phi=None) -> HistorySegment:
        """History with ``phi`` on ``[-r, 0)`` at step resolution and ``u0`` at ``t = 0``."""
        cfg = self.cfg
        m = cfg.m
        if u0.m != m:
            raise InvalidInputError(f"u0 has {u0.m} modes, model has {m}")
        n_hist = math.ceil(cfg.r / cfg.dt - 1e-9)
        thetas = -cfg.dt * np.arange(n_hist, 0, -1)
        samples = _history_samples(phi, thetas, u0, m)
        h = HistorySegment.for_step(cfg.r, m, cfg.dt)
        for th, c in zip(thetas, samples):
            h.append(th, c)
        h.append(0.0, u0.coeffs)
        return h

    def simulate(self, u0: SpectralField, phi=None, T: float = 1.0) -> Trajectory:
        """Integrate on ``[0, T]``; ``phi`` defaults to the constant history ``u0``."""
        cfg = self.cfg
        if not T > 0:
            raise InvalidConfigError(f"horizon T must be positive, got {T}")
        n_steps = int(round(T / cfg.dt))
        if abs(n_steps * cfg.dt - T) > 1e-9 * max(1.0, T):
            n_steps = math.ceil(T / cfg.dt)
        hist = self.prime_history(u0, phi)
        m = cfg.m
        coeffs = np.empty((n_steps + 1, m))
        forcing = np.empty((n_steps, m))
        int_h1 = np.empty(n_steps)
        int_l2 = np.empty(n_steps)
        g = u0.coeffs.copy()
        coeffs[0] = g
        lam = cfg.basis.lam
        state = PhaseState(SpectralField(g), hist)
        for n in range(n_steps):
            t = n * cfg.dt
            F = self.forcing(state)
            if not np.all(np.isfinite(F)):
                raise NumericalBlowupError(t)
            ints = step_integrals(g, F, self.mu, cfg.dt)
            int_h1[n] = ints @ lam
            int_l2[n] = ints.sum()
            forcing[n] = F
            g = self.advance(g, F)
            if not np.all(np.isfinite(g)):
                raise NumericalBlowupError(t + cfg.dt)
            coeffs[n + 1] = g
            hist.append((n + 1) * cfg.dt, g)
            state = PhaseState(SpectralField(g), hist)
        times = cfg.dt * np.arange(n_steps + 1)
        return Trajectory(times, coeffs, forcing, int_h1, int_l2, lam.copy(), cfg.d, hist)


def _history_samples(phi, thetas, u0, m):
    if phi is None:
        return np.tile(u0.coeffs, (thetas.size, 1))
    if isinstance(phi, SpectralField):
        return np.tile(phi.coeffs, (thetas.size, 1))
    if callable(phi):
        try:
            vals = np.asarray(phi(thetas), dtype=float)
        except (TypeError, ValueError):
            vals = None
        if vals is not None and vals.shape == (thetas.size, m):
            return vals
        # scalar-theta callables, possibly returning SpectralField
        rows = []
        for t in thetas:
            v = phi(float(t))
            rows.append(np.asarray(getattr(v, "coeffs", v), dtype=float))
        return np.array(rows)
    arr = np.asarray(phi, dtype=float)
    if arr.shape != (thetas.size, m):
        raise InvalidInputError(f"history samples must have shape {(thetas.size, m)}, got {arr.shape}")
    return arr


def solver_for(cfg: ModelConfig) -> GalerkinSolver:
    s = cfg.__dict__.get("_solver")
    if s is None:
        s = cfg.__dict__["_solver"] = GalerkinSolver(cfg)
    return s


def eval_F(state: PhaseState, cfg: ModelConfig) -> SpectralField:
    """Delay term ``F(u_t)`` projected onto the retained modes."""
    return solver_for(cfg).eval_F(state)


def step(state: PhaseState, cfg: ModelConfig) -> SpectralField:
    return solver_for(cfg).step(state)


def simulate(cfg: ModelConfig, u0: SpectralField, phi=None, T: float = 1.0) -> Trajectory:
    return solver_for(cfg).simulate(u0, phi, T)
