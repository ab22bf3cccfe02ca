"""Phase-space states ``(v, psi)`` in ``L2(Omega) x L2(-r, 0; L2(Omega))``.

A :class:`HistorySegment` stores time-stamped coefficient vectors in a ring
buffer and interpolates linearly in time.  Integrals over the delay window
use a :class:`ThetaQuadrature`, a composite rule whose nodes include both
endpoints of ``[-r, 0]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidConfigError, InvalidInputError, InvalidStateError
from .spectral import Basis, SpectralField

_TIME_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ThetaQuadrature:
    """Composite quadrature on ``[-r, 0]`` with ascending nodes."""

    r: float
    nodes: np.ndarray
    weights: np.ndarray
    rule: str = "trapezoid"

    @property
    def n(self) -> int:
        return self.nodes.size

    def integrate(self, values) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))


def theta_quadrature(r: float, n: int = 32, rule: str = "trapezoid") -> ThetaQuadrature:
    """Composite trapezoid (default) or Simpson rule with ``n`` equispaced nodes."""
    if not r > 0:
        raise InvalidConfigError(f"delay r must be positive, got {r}")
    if n < 2:
        raise InvalidConfigError("theta quadrature needs at least 2 nodes")
    nodes = np.linspace(-r, 0.0, n)
    h = r / (n - 1)
    if rule == "trapezoid":
        weights = np.full(n, h)
        weights[[0, -1]] *= 0.5
    elif rule == "simpson":
        if n % 2 == 0:
            raise InvalidConfigError("composite Simpson needs an odd node count")
        weights = np.full(n, 2.0 * h / 3.0)
        weights[1::2] = 4.0 * h / 3.0
        weights[[0, -1]] = h / 3.0
    else:
        raise InvalidConfigError(f"unknown theta rule {rule!r}")
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return ThetaQuadrature(float(r), nodes, weights, rule)


class HistorySegment:
    """Ring buffer of ``(t_i, u_i)`` covering at least ``[t_now - r, t_now]``.

    Entries are written twice into a buffer of length ``2 * capacity`` so that
    the live window is always a contiguous view; no copy is needed to
    interpolate.
    """

    def __init__(self, r: float, m: int, capacity: int):
        if not r > 0:
            raise InvalidConfigError(f"delay r must be positive, got {r}")
        if capacity < 2:
            raise InvalidConfigError("history capacity must be at least 2")
        self.r = float(r)
        self.m = int(m)
        self.capacity = int(capacity)
        self._t = np.empty(2 * self.capacity)
        self._c = np.empty((2 * self.capacity, self.m))
        self._head = 0
        self._n = 0

    @classmethod
    def for_step(cls, r: float, m: int, dt: float) -> "HistorySegment":
        """Buffer sized for a fixed step: ``ceil(r/dt) + 2`` entries."""
        return cls(r, m, math.ceil(r / dt - 1e-12) + 2)

    @classmethod
    def from_samples(cls, times, coeffs, r: float, capacity: int | None = None) -> "HistorySegment":
        times = np.asarray(times, dtype=float)
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        if coeffs.shape[0] != times.size:
            raise InvalidInputError("times and coefficient rows differ in length")
        h = cls(r, coeffs.shape[1], capacity or times.size)
        for t, c in zip(times, coeffs):
            h.append(t, c)
        h.check_coverage()
        return h

    @classmethod
    def constant(cls, v: SpectralField, r: float, t_now: float = 0.0, n: int = 2) -> "HistorySegment":
        """History equal to ``v`` at every time in ``[t_now - r, t_now]``."""
        times = np.linspace(t_now - r, t_now, n)
        return cls.from_samples(times, np.tile(v.coeffs, (n, 1)), r)

    def append(self, t: float, coeffs) -> None:
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.m,):
            raise InvalidInputError(f"expected {self.m} coefficients, got shape {coeffs.shape}")
        if self._n and not t > self.t_now:
            raise InvalidStateError(f"history times must increase strictly ({t} after {self.t_now})")
        pos = (self._head + self._n) % self.capacity
        self._t[pos] = self._t[pos + self.capacity] = t
        self._c[pos] = self._c[pos + self.capacity] = coeffs
        if self._n < self.capacity:
            self._n += 1
        else:
            self._head = (self._head + 1) % self.capacity

    @property
    def times(self) -> np.ndarray:
        return self._t[self._head:self._head + self._n]

    @property
    def coeffs(self) -> np.ndarray:
        return self._c[self._head:self._head + self._n]

    @property
    def t_now(self) -> float:
        if not self._n:
            raise InvalidStateError("empty history")
        return float(self._t[self._head + self._n - 1])

    def __len__(self):
        return self._n

    def head(self) -> SpectralField:
        return SpectralField(self.coeffs[-1].copy())

    def covers(self) -> bool:
        return self._n >= 2 and self.t_now - self.times[0] >= self.r - _TIME_TOL * max(1.0, self.r)

    def check_coverage(self) -> None:
        if not self.covers():
            span = self.t_now - self.times[0] if self._n else 0.0
            raise InvalidStateError(f"history spans {span:.6g} < delay r = {self.r:.6g}")

    def sample_many(self, thetas) -> np.ndarray:
        """Linear interpolation at ``t_now + theta``; returns shape (len(thetas), m)."""
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        tol = _TIME_TOL * max(1.0, self.r)
        if np.any(thetas < -self.r - tol) or np.any(thetas > tol):
            raise DomainError(f"theta must lie in [-{self.r}, 0]")
        self.check_coverage()
        t = self.times
        c = self.coeffs
        q = self.t_now + thetas
        if q.min() < t[0] - tol:
            raise InvalidStateError("history does not reach back far enough")
        q = np.clip(q, t[0], t[-1])
        idx = np.clip(np.searchsorted(t, q, side="right"), 1, t.size - 1)
        t0 = t[idx - 1]
        w = (q - t0) / (t[idx] - t0)
        return c[idx - 1] * (1.0 - w)[:, None] + c[idx] * w[:, None]

    def sample(self, theta: float) -> SpectralField:
        return SpectralField(self.sample_many([theta])[0])

    def snapshot(self) -> "HistorySegment":
        """Independent copy of the live window."""
        h = HistorySegment(self.r, self.m, max(self._n, 2))
        for t, c in zip(self.times, self.coeffs):
            h.append(t, c)
        return h


def sample_history(h: HistorySegment, theta: float) -> SpectralField:
    """Field ``u(t_now + theta)`` by linear interpolation between stored entries."""
    return h.sample(theta)


@dataclass(eq=False)
class PhaseState:
    """Current value ``v = u(t)`` and history segment ``psi = u_t``."""

    v: SpectralField
    psi: HistorySegment
    _cache: dict = field(default_factory=dict, repr=False)

    def psi_at(self, tq: ThetaQuadrature) -> np.ndarray:
        """History samples on the nodes of ``tq`` (cached per state and rule)."""
        key = (id(tq.nodes), self.psi.t_now, len(self.psi))
        hit = self._cache.get("psi")
        if hit is not None and hit[0] == key:
            return hit[1]
        vals = self.psi.sample_many(tq.nodes)
        self._cache["psi"] = (key, vals)
        return vals

    def invalidate(self) -> None:
        self._cache.clear()

    @classmethod
    def constant(cls, v: SpectralField, tq: ThetaQuadrature) -> "PhaseState":
        """Stationary state ``(v, v)`` with history sampled on the theta nodes."""
        return cls(v.copy(), HistorySegment.from_samples(tq.nodes, np.tile(v.coeffs, (tq.n, 1)), tq.r))


def h_norm_sq(v_coeffs: np.ndarray, psi_samples: np.ndarray, tq: ThetaQuadrature) -> float:
    return float(v_coeffs @ v_coeffs + tq.weights @ np.einsum("ij,ij->i", psi_samples, psi_samples))


def h_norm(s: PhaseState, theta_quad: ThetaQuadrature) -> float:
    """``sqrt(||v||^2 + int_{-r}^0 ||psi(s)||^2 ds)`` with the theta rule."""
    return math.sqrt(h_norm_sq(s.v.coeffs, s.psi_at(theta_quad), theta_quad))


def h_distance(s1: PhaseState, s2: PhaseState, theta_quad: ThetaQuadrature) -> float:
    dv = s1.v.coeffs - s2.v.coeffs
    dpsi = s1.psi_at(theta_quad) - s2.psi_at(theta_quad)
    return math.sqrt(h_norm_sq(dv, dpsi, theta_quad))


def h_distance_to_constant(s: PhaseState, target: np.ndarray, theta_quad: ThetaQuadrature) -> float:
    """Distance from ``s`` to the stationary state ``(target, target)``."""
    dv = s.v.coeffs - target
    dpsi = s.psi_at(theta_quad) - target
    return math.sqrt(h_norm_sq(dv, dpsi, theta_quad))


def state_from_samples(v: SpectralField, psi_samples: np.ndarray, tq: ThetaQuadrature) -> PhaseState:
    """Phase state whose history entries sit on the theta nodes (last row replaced by ``v``)."""
    psi = np.array(psi_samples, dtype=float, copy=True)
    psi[-1] = v.coeffs
    return PhaseState(v.copy(), HistorySegment.from_samples(tq.nodes, psi, tq.r))


class SmoothHistory:
    """History ``phi(theta) = a0 + a1 (theta/r) + a2 sin(pi theta / r)`` per mode.

    Callable returning coefficient vectors; used for random initial data.
    """

    def __init__(self, r: float, a0, a1, a2):
        self.r = float(r)
        self.a = np.stack([np.asarray(a0, float), np.asarray(a1, float), np.asarray(a2, float)])

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        s = theta / self.r
        basis = np.stack([np.ones_like(s), s, np.sin(np.pi * s)], axis=-1)
        return basis @ self.a

    def scaled(self, factor: float) -> "SmoothHistory":
        return SmoothHistory(self.r, *(factor * self.a))


def random_initial_data(basis: Basis, tq: ThetaQuadrature, rng: np.random.Generator,
                        radius: float, exact_radius: bool = False, decay: float = 1.0):
    """Random ``(u0, phi)`` with H-norm ``radius`` (or uniform in ``[0, radius]``).

    Coefficients are normal with standard deviation ``k**-decay``.
    """
    m = basis.m
    scale = np.arange(1, m + 1, dtype=float) ** (-decay)
    u0 = rng.standard_normal(m) * scale
    phi = SmoothHistory(tq.r, *(rng.standard_normal((3, m)) * scale))
    samples = phi(tq.nodes)
    samples[-1] = u0
    norm = math.sqrt(h_norm_sq(u0, samples, tq))
    target = radius if exact_radius else radius * rng.uniform()
    f = target / norm if norm > 0 else 0.0
    return SpectralField(u0 * f), phi.scaled(f)


def random_phase_state(basis: Basis, tq: ThetaQuadrature, rng: np.random.Generator,
                       radius: float, exact_radius: bool = False, decay: float = 1.0) -> PhaseState:
    """Random phase state inside (or on) the H-ball of the given radius."""
    u0, phi = random_initial_data(basis, tq, rng, radius, exact_radius, decay)
    return state_from_samples(u0, phi(tq.nodes), tq)
