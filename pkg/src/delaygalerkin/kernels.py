"""State-dependent delay kernels ``xi(theta, x, v, psi)`` and their certification.

A kernel maps a delay ``theta`` and a phase state to an x-profile given by
sine coefficients.  Four sup/Lipschitz-type constants control the dynamics:

* ``c_minus_half`` -- ``sup_state int ||xi(theta)||_{-1/2} dtheta``
* ``c_zero``       -- ``sup_state int ||xi(theta)|| dtheta``
* ``ess_sup``      -- ``sup_state sup_theta ||xi(theta)||_{-1/2}``
* ``lipschitz``    -- ``int ||xi(s1) - xi(s2)||_{-1/2} dtheta <= L * d_H(s1, s2)``

Built-in kernels declare these constants; the ``certify_*`` functions
measure them by sampling.  Sampling yields lower bounds of the true sup, so
the contract checked is ``measured <= declared``.

Declared constants are computed for a given theta rule: each is the larger of
the exact-integral value and the value for the discrete rule the solver
applies, so the same number bounds both.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .errors import InvalidConfigError
from .phase_space import (
    PhaseState,
    ThetaQuadrature,
    h_distance,
    h_norm,
    h_norm_sq,
    random_phase_state,
    state_from_samples,
)
from .spectral import Basis, SpectralField, build_basis, fractional_norm

CHI_INTEGRAL_TOL = 1e-12


# --------------------------------------------------------------------------- bumps

def _phi(s):
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    out = np.zeros_like(s)
    si = s[inside]
    out[inside] = np.exp(-1.0 / (1.0 - si * si))
    return out


def _dphi(s):
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    out = np.zeros_like(s)
    si = s[inside]
    q = 1.0 - si * si
    out[inside] = np.exp(-1.0 / q) * (-2.0 * si / (q * q))
    return out


@lru_cache(maxsize=None)
def _bump_constants():
    """Normalizer and derivative maxima of ``exp(-1/(1-s^2))`` on (-1, 1)."""
    z = quad(lambda s: math.exp(-1.0 / (1.0 - s * s)), -1.0, 1.0, epsabs=1e-14, epsrel=1e-14, limit=200)[0]
    s = np.linspace(-1.0, 1.0, 200001)[1:-1]
    q = 1.0 - s * s
    phi = np.exp(-1.0 / q)
    d1 = np.abs(phi * 2.0 * s / q**2).max()
    d2 = np.abs(phi * (6.0 * s**4 - 2.0) / q**4).max()
    # grid maxima of smooth functions; 1% headroom covers the sampling gap
    return z, 1.01 * d1, 1.01 * d2


def bump(theta, center: float, halfwidth: float):
    """Unit-mass C-infinity bump supported on ``[center - halfwidth, center + halfwidth]``."""
    z = _bump_constants()[0]
    return _phi((np.asarray(theta, dtype=float) - center) / halfwidth) / (halfwidth * z)


def bump_peak(halfwidth: float) -> float:
    return math.exp(-1.0) / (halfwidth * _bump_constants()[0])


def bump_derivative(theta, center: float, halfwidth: float):
    z = _bump_constants()[0]
    return _dphi((np.asarray(theta, dtype=float) - center) / halfwidth) / (halfwidth**2 * z)


def _scan_sup(func, lo: float, hi: float, n: int = 4097):
    grid = np.linspace(lo, hi, n) if hi > lo else np.array([lo])
    vals = np.array([func(g) for g in grid])
    return float(vals.max()), (grid[1] - grid[0]) if grid.size > 1 else 0.0


# --------------------------------------------------------------------------- time profiles

@dataclass(frozen=True, eq=False)
class TimeProfile:
    """Time factor ``chi(theta)`` on ``[-r, 0]`` with a nonvanishing integral."""

    family: str
    params: dict
    r: float
    integral: float
    abs_integral: float
    sup_abs: float

    def __post_init__(self):
        if not abs(self.integral) >= CHI_INTEGRAL_TOL:
            raise InvalidConfigError(
                f"time profile {self.family!r} has integral {self.integral:.3g} over [-r, 0]; "
                "chi must have a nonzero integral"
            )
        if not math.isfinite(self.abs_integral):
            raise InvalidConfigError("time profile must be absolutely integrable")

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        p = self.params
        if self.family == "constant":
            return np.full_like(theta, p["value"])
        if self.family == "bump":
            return p["mass"] * bump(theta, p["center"], p["halfwidth"])
        if self.family == "cosine":
            return p["mean"] + p["amplitude"] * np.cos(2.0 * np.pi * p["frequency"] * theta / self.r)
        raise InvalidConfigError(f"unknown time profile family {self.family!r}")

    def discrete_integral(self, tq: ThetaQuadrature) -> float:
        return tq.integrate(self(tq.nodes))

    def discrete_abs_integral(self, tq: ThetaQuadrature) -> float:
        return tq.integrate(np.abs(self(tq.nodes)))

    def descriptor(self) -> dict:
        return {"family": self.family, **self.params}


def constant_profile(r: float, value: float = 1.0) -> TimeProfile:
    value = float(value)
    return TimeProfile("constant", {"value": value}, float(r), value * r, abs(value) * r, abs(value))


def bump_profile(r: float, center: float | None = None, halfwidth: float | None = None,
                 mass: float = 1.0) -> TimeProfile:
    """Bump of total ``mass`` centred at ``center`` (default ``-r/2``)."""
    center = -0.5 * r if center is None else float(center)
    halfwidth = 0.25 * r if halfwidth is None else float(halfwidth)
    if halfwidth <= 0 or center - halfwidth < -r - 1e-12 or center + halfwidth > 1e-12:
        raise InvalidConfigError("bump support must lie inside [-r, 0]")
    mass = float(mass)
    return TimeProfile("bump", {"center": center, "halfwidth": halfwidth, "mass": mass}, float(r),
                       mass, abs(mass), abs(mass) * bump_peak(halfwidth))


def cosine_profile(r: float, mean: float, amplitude: float, frequency: int = 1) -> TimeProfile:
    """``mean + amplitude cos(2 pi k theta / r)``; sign-changing when ``|amplitude| > |mean|``."""
    if int(frequency) != frequency or frequency < 1:
        raise InvalidConfigError("cosine frequency must be a positive integer")
    mean, amplitude, frequency = float(mean), float(amplitude), int(frequency)
    f = lambda t: abs(mean + amplitude * math.cos(2.0 * math.pi * frequency * t / r))  # noqa: E731
    pts = np.linspace(-r, 0.0, 4 * frequency + 1)[1:-1]
    abs_int = quad(f, -r, 0.0, points=pts, limit=200, epsabs=1e-13, epsrel=1e-13)[0]
    return TimeProfile("cosine", {"mean": mean, "amplitude": amplitude, "frequency": frequency},
                       float(r), mean * r, abs_int, abs(mean) + abs(amplitude))


def time_profile_from_descriptor(desc: dict, r: float) -> TimeProfile:
    d = dict(desc)
    family = d.pop("family", "constant")
    if family == "constant":
        return constant_profile(r, d.get("value", 1.0))
    if family == "bump":
        return bump_profile(r, d.get("center"), d.get("halfwidth"), d.get("mass", 1.0))
    if family == "cosine":
        return cosine_profile(r, d["mean"], d["amplitude"], d.get("frequency", 1))
    raise InvalidConfigError(f"unknown time profile family {family!r}")


# --------------------------------------------------------------------------- kernels

@dataclass
class KernelBounds:
    c_minus_half: float | None = None
    c_zero: float | None = None
    ess_sup: float | None = None
    lipschitz: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def row_norms(coeffs: np.ndarray, lam: np.ndarray, s: float) -> np.ndarray:
    """``||A^s row||`` for every row of a coefficient matrix."""
    if s == 0:
        return np.sqrt(np.einsum("ij,ij->i", coeffs, coeffs))
    return np.sqrt((coeffs * coeffs) @ lam ** (2.0 * s))


class DelayKernel(ABC):
    """Kernel interface.  Subclasses implement :meth:`profiles`.

    ``declared`` (if given) overrides the bounds the family derives itself,
    e.g. to state a user contract that certification must honour.
    """

    family = "abstract"

    def __init__(self, m: int, declared: KernelBounds | None = None):
        self.m = int(m)
        self.declared = declared

    @abstractmethod
    def profiles(self, thetas: np.ndarray, state: PhaseState) -> np.ndarray:
        """Coefficient matrix of shape ``(len(thetas), m)``."""

    def eval(self, theta: float, state: PhaseState) -> SpectralField:
        return SpectralField(self.profiles(np.array([float(theta)]), state)[0])

    def natural_bounds(self, tq: ThetaQuadrature, basis: Basis) -> KernelBounds:
        return KernelBounds()

    def declared_bounds(self, tq: ThetaQuadrature, basis: Basis) -> KernelBounds:
        natural = self.natural_bounds(tq, basis)
        if self.declared is None:
            return natural
        merged = natural.to_dict()
        merged.update({k: v for k, v in self.declared.to_dict().items() if v is not None})
        return KernelBounds(**merged)

    def descriptor(self) -> dict:
        d = {"family": self.family}
        if self.declared is not None:
            d["declared"] = {k: v for k, v in self.declared.to_dict().items() if v is not None}
        return d


class ZeroKernel(DelayKernel):
    family = "zero"

    def profiles(self, thetas, state):
        return np.zeros((np.size(thetas), self.m))

    def natural_bounds(self, tq, basis):
        return KernelBounds(0.0, 0.0, 0.0, 0.0)


class ConstantInStateKernel(DelayKernel):
    """Separable, state-independent kernel ``chi(theta) w(x)``."""

    family = "constant_in_state"

    def __init__(self, profile: SpectralField, chi: TimeProfile, declared: KernelBounds | None = None):
        super().__init__(profile.m, declared)
        self.profile = profile.copy()
        self.chi = chi

    def profiles(self, thetas, state):
        return np.outer(self.chi(np.asarray(thetas, dtype=float)), self.profile.coeffs)

    def natural_bounds(self, tq, basis):
        mass = max(self.chi.abs_integral, self.chi.discrete_abs_integral(tq))
        wm = fractional_norm(self.profile, -0.5, basis)
        return KernelBounds(wm * mass, self.profile.norm() * mass, wm * self.chi.sup_abs, 0.0)

    def descriptor(self):
        d = super().descriptor()
        d.update(profile=self.profile.coeffs.tolist(), chi=self.chi.descriptor())
        return d


@dataclass(frozen=True)
class SaturatingDelay:
    """Delay selection ``tau(s) = tau_min + (tau_max - tau_min) s / (s + scale)`` for ``s = ||v||``."""

    tau_min: float
    tau_max: float
    scale: float = 1.0

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return self.tau_min + (self.tau_max - self.tau_min) * s / (s + self.scale)

    @property
    def lipschitz(self) -> float:
        return (self.tau_max - self.tau_min) / self.scale


class DelaySelectiveKernel(DelayKernel):
    """``xi = bump_sigma(theta + tau(||v||)) w(x)``: the state selects the delay.

    The bump has unit mass and support ``[-tau - sigma, -tau + sigma]``, kept
    inside ``[-r, 0]`` by requiring ``sigma <= tau_min <= tau_max <= r - sigma``.
    """

    family = "delay_selective"

    def __init__(self, profile: SpectralField, r: float, sigma: float, tau: SaturatingDelay,
                 declared: KernelBounds | None = None):
        super().__init__(profile.m, declared)
        if not sigma > 0:
            raise InvalidConfigError("bump width sigma must be positive")
        if tau.scale <= 0:
            raise InvalidConfigError("delay-selection scale must be positive")
        tol = 1e-12 * r
        if not (sigma - tol <= tau.tau_min <= tau.tau_max <= r - sigma + tol):
            raise InvalidConfigError(
                f"delay range [{tau.tau_min}, {tau.tau_max}] must lie in [sigma, r - sigma] = "
                f"[{sigma}, {r - sigma}] so the bump stays inside [0, r]"
            )
        self.profile = profile.copy()
        self.r = float(r)
        self.sigma = float(sigma)
        self.tau = tau

    def delay(self, state: PhaseState) -> float:
        return float(self.tau(state.v.norm()))

    def profiles(self, thetas, state):
        weights = bump(np.asarray(thetas, dtype=float), -self.delay(state), self.sigma)
        return np.outer(weights, self.profile.coeffs)

    def _shift_range(self, tq):
        h = tq.r / (tq.n - 1)
        return self.tau.tau_min, min(self.tau.tau_max, self.tau.tau_min + 2.0 * h)

    def discrete_mass_sup(self, tq: ThetaQuadrature) -> float:
        """Upper bound of ``sum_j w_j bump(theta_j + tau)`` over admissible ``tau``.

        The sum is periodic in ``tau`` with the rule's period (``2h`` covers
        trapezoid and Simpson), so one period is scanned; the gap between scan
        points is covered by the second-derivative bound ``delta^2/8 sup|f''|``.
        """
        lo, hi = self._shift_range(tq)
        top, step = _scan_sup(lambda t: tq.integrate(bump(tq.nodes, -t, self.sigma)), lo, hi)
        d2 = _bump_constants()[2] / (self.sigma**3 * _bump_constants()[0])
        return top + step * step / 8.0 * float(np.abs(tq.weights).sum()) * d2

    def discrete_variation_sup(self, tq: ThetaQuadrature) -> float:
        """Upper bound of ``sum_j w_j |bump'(theta_j + tau)|`` over ``tau``."""
        lo, hi = self._shift_range(tq)
        top, step = _scan_sup(lambda t: tq.integrate(np.abs(bump_derivative(tq.nodes, -t, self.sigma))), lo, hi)
        d2 = _bump_constants()[2] / (self.sigma**3 * _bump_constants()[0])
        return top + 0.5 * step * float(np.abs(tq.weights).sum()) * d2

    def natural_bounds(self, tq, basis):
        mass = max(1.0, self.discrete_mass_sup(tq))
        variation = max(2.0 * bump_peak(self.sigma), self.discrete_variation_sup(tq))
        wm = fractional_norm(self.profile, -0.5, basis)
        return KernelBounds(
            c_minus_half=wm * mass,
            c_zero=self.profile.norm() * mass,
            ess_sup=wm * bump_peak(self.sigma),
            lipschitz=wm * variation * self.tau.lipschitz,
        )

    def descriptor(self):
        d = super().descriptor()
        d.update(profile=self.profile.coeffs.tolist(), sigma=self.sigma, tau_min=self.tau.tau_min,
                 tau_max=self.tau.tau_max, tau_scale=self.tau.scale)
        return d


def constant_in_state(profile: SpectralField, chi: TimeProfile, declared: KernelBounds | None = None):
    return ConstantInStateKernel(profile, chi, declared)


def delay_selective(profile: SpectralField, r: float, sigma: float, tau_min: float | None = None,
                    tau_max: float | None = None, tau_scale: float = 1.0,
                    declared: KernelBounds | None = None) -> DelaySelectiveKernel:
    tau_min = sigma if tau_min is None else tau_min
    tau_max = r - sigma if tau_max is None else tau_max
    return DelaySelectiveKernel(profile, r, sigma, SaturatingDelay(tau_min, tau_max, tau_scale), declared)


# --------------------------------------------------------------------------- certification

def certify_bound_minus_half(k: DelayKernel, states, theta_quad: ThetaQuadrature, basis: Basis) -> float:
    """Measured ``max_state sum_j w_j ||xi(theta_j, state)||_{-1/2}``."""
    return _integrated_norm(k, states, theta_quad, basis, -0.5)


def certify_bound_zero(k: DelayKernel, states, theta_quad: ThetaQuadrature, basis: Basis) -> float:
    """Measured ``max_state sum_j w_j ||xi(theta_j, state)||``."""
    return _integrated_norm(k, states, theta_quad, basis, 0.0)


def _integrated_norm(k, states, tq, basis, s):
    states = list(states)
    if not states:
        raise InvalidConfigError("certification needs at least one state")
    best = 0.0
    for st in states:
        best = max(best, tq.integrate(row_norms(k.profiles(tq.nodes, st), basis.lam, s)))
    return best


def certify_ess_sup(k: DelayKernel, states, theta_grid, basis: Basis) -> float:
    """Measured ``max_{state, theta in grid} ||xi(theta, state)||_{-1/2}``."""
    grid = np.asarray(theta_grid, dtype=float)
    best = 0.0
    for st in states:
        best = max(best, float(row_norms(k.profiles(grid, st), basis.lam, -0.5).max()))
    return best


def _perturb(state: PhaseState, rng, size: float, tq: ThetaQuadrature) -> PhaseState:
    m = state.v.m
    dv = rng.standard_normal(m)
    dpsi = rng.standard_normal((tq.n, m))
    dpsi[-1] = dv
    scale = size / math.sqrt(h_norm_sq(dv, dpsi, tq))
    return state_from_samples(SpectralField(state.v.coeffs + scale * dv), state.psi_at(tq) + scale * dpsi, tq)


def _clip_to_ball(state: PhaseState, M: float, tq: ThetaQuadrature) -> PhaseState:
    n = h_norm(state, tq)
    if n <= M:
        return state
    f = M / n
    return state_from_samples(state.v * f, state.psi_at(tq) * f, tq)


def estimate_lipschitz(k: DelayKernel, M: float, n_pairs: int, rng_seed: int, basis: Basis,
                       theta_quad: ThetaQuadrature, anchors=None, spread: float | None = None) -> float:
    """Largest observed ratio ``int ||xi(s1) - xi(s2)||_{-1/2} / d_H(s1, s2)`` in the M-ball.

    Without ``anchors``, pairs alternate between independent draws and close
    pairs (relative separation ``10**U(-3, 0)``).  With ``anchors``, every pair
    is drawn around a randomly chosen anchor at distance ``U(0, spread)``,
    which probes kernels whose state dependence is localized.
    """
    if not M > 0:
        raise InvalidConfigError(f"ball radius M must be positive, got {M}")
    rng = np.random.default_rng(rng_seed)
    tq = theta_quad
    best = 0.0
    anchors = list(anchors) if anchors is not None else None
    for i in range(int(n_pairs)):
        if anchors:
            a = anchors[rng.integers(len(anchors))]
            size = spread if spread is not None else M
            s1 = _perturb(a, rng, size * rng.uniform(), tq)
            s2 = _perturb(a, rng, size * rng.uniform(), tq)
        else:
            s1 = random_phase_state(basis, tq, rng, M)
            if i % 2:
                s2 = _perturb(s1, rng, M * 10.0 ** rng.uniform(-3.0, 0.0), tq)
            else:
                s2 = random_phase_state(basis, tq, rng, M)
        s1 = _clip_to_ball(s1, M, tq)
        s2 = _clip_to_ball(s2, M, tq)
        dist = h_distance(s1, s2, tq)
        if dist < 1e-12:
            continue
        diff = k.profiles(tq.nodes, s1) - k.profiles(tq.nodes, s2)
        best = max(best, tq.integrate(row_norms(diff, basis.lam, -0.5)) / dist)
    return best


def minus_half_refinement(profile_factory, L: float, m: int, levels: int = 3) -> tuple[list[float], list[float]]:
    """``||w||_{-1/2}`` for ``m, 2m, 4m, ...`` and the ratios of consecutive levels.

    ``profile_factory(basis)`` must return the profile on the given basis.
    Bounded ratios near one indicate membership of the limit in D(A^{-1/2}).
    """
    norms = []
    for j in range(levels):
        b = build_basis(L, m * 2**j)
        norms.append(fractional_norm(profile_factory(b), -0.5, b))
    ratios = [norms[j + 1] / norms[j] for j in range(levels - 1)]
    return norms, ratios


@dataclass
class CertificateReport:
    """Measured constants next to declared ones, with a pass flag per inequality."""

    measured: dict
    declared: dict
    checks: dict = field(default_factory=dict)
    rtol: float = 1e-9

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {"measured": self.measured, "declared": self.declared, "checks": self.checks,
                "passed": self.passed}


def certify_kernel(k: DelayKernel, basis: Basis, theta_quad: ThetaQuadrature, *, n_states: int = 200,
                   seed: int = 0, M: float = 1.0, n_pairs: int = 200, ess_grid_n: int = 401,
                   anchors=None, spread: float | None = None, extra_states=()) -> CertificateReport:
    """Run all four certifications and compare against the kernel's declared bounds."""
    rng = np.random.default_rng(seed)
    states = [random_phase_state(basis, theta_quad, rng, M) for _ in range(n_states)]
    states.extend(extra_states)
    if anchors:
        states.extend(anchors)
    grid = np.linspace(-theta_quad.r, 0.0, ess_grid_n)
    measured = {
        "c_minus_half": certify_bound_minus_half(k, states, theta_quad, basis),
        "c_zero": certify_bound_zero(k, states, theta_quad, basis),
        "ess_sup": certify_ess_sup(k, states, grid, basis),
        "lipschitz": estimate_lipschitz(k, M, n_pairs, seed + 1, basis, theta_quad, anchors, spread),
    }
    declared = k.declared_bounds(theta_quad, basis).to_dict()
    report = CertificateReport(measured, declared)
    for name, value in measured.items():
        bound = declared.get(name)
        finite = math.isfinite(value)
        report.checks[name] = finite and (bound is None or value <= bound * (1.0 + report.rtol) + 1e-300)
    return report
