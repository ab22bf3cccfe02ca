"""Kernels that make prescribed states exact equilibria.

For a target ``u`` in the span of the retained modes and a time factor
``chi`` with ``I = int chi != 0``, the constant history ``(u, u)`` gives the
delay term

    F = I * P[ p(x) v(x) ],    p(x) = int b(u(y)) f(x - y) dy,

for a separable kernel ``chi(theta) v(x)``.  Choosing ``v`` so that
``P[p v] = (A + d) u / I`` makes ``u`` stationary.  Several targets are
combined by weighting each separable kernel with a ramp of the H-distance
to its target, so each target sees only its own kernel.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateEquilibriumError, InvalidConfigError
from .kernels import DelayKernel, KernelBounds, TimeProfile
from .model import ModelConfig, Nonlinearity, SpatialKernel
from .phase_space import PhaseState, ThetaQuadrature, h_distance_to_constant, h_norm_sq
from .solver import solver_for
from .spectral import Basis, SpectralField, fractional_norm, on_nodes, project

P_MIN_TOL = 1e-12


@dataclass
class EquilibriumSpec:
    """A nonzero target equilibrium and the time factor of its kernel."""

    u_st: SpectralField
    chi: TimeProfile
    label: str = ""

    def __post_init__(self):
        if not self.u_st.norm() > 0:
            raise InvalidConfigError("target equilibrium must be nonzero; the zero state needs no kernel")


@dataclass
class PSamples:
    values: np.ndarray
    p_min: float
    slope_max: float


def compute_p(u_st: SpectralField, b: Nonlinearity, f: SpatialKernel, basis: Basis) -> PSamples:
    """``p(x) = sum_y w_y b(u_st(y)) f(x - y)`` on the spatial nodes.

    ``slope_max`` is a finite-difference estimate of ``max |p'|``.
    Raises :class:`DegenerateEquilibriumError` when ``min p <= 1e-12``.
    """
    x = basis.quad_nodes
    births = b(on_nodes(u_st, basis))
    p = f(x[:, None] - x[None, :]) @ (basis.quad_weights * births)
    p_min = float(p.min())
    if not p_min > P_MIN_TOL:
        raise DegenerateEquilibriumError(
            f"p has minimum {p_min:.3g} <= {P_MIN_TOL:g}; the target cannot be made stationary"
        )
    slope = float(np.abs(np.gradient(p, x)).max()) if x.size > 1 else 0.0
    return PSamples(p, p_min, slope)


def p_lipschitz_bound(u_st: SpectralField, b: Nonlinearity, f: SpatialKernel, basis: Basis) -> float:
    """``||b(u_st)|| * sup|f'| * sqrt(L)``, a Lipschitz constant for ``p``."""
    births = b(on_nodes(u_st, basis))
    return math.sqrt(basis.quad_weights @ births**2) * f.slope * math.sqrt(basis.L)


@dataclass
class SynthesizedTarget:
    spec: EquilibriumSpec
    vhat: SpectralField
    p: PSamples
    chi_integral: float
    certificates: dict = field(default_factory=dict)

    @property
    def target(self) -> np.ndarray:
        return self.spec.u_st.coeffs

    def to_dict(self) -> dict:
        return {
            "label": self.spec.label,
            "u_st": self.spec.u_st.coeffs.tolist(),
            "chi": self.spec.chi.descriptor(),
            "chi_integral": self.chi_integral,
            "vhat": self.vhat.coeffs.tolist(),
            "p_min": self.p.p_min,
            "p_slope_max": self.p.slope_max,
            "certificates": self.certificates,
        }


def synthesize_vhat(u_st: SpectralField, d: float, p: PSamples, chi: TimeProfile, basis: Basis,
                    tq: ThetaQuadrature, method: str = "galerkin") -> tuple[SpectralField, dict]:
    """Spatial factor ``v`` of the separable kernel for one target.

    ``method="pointwise"`` samples ``(A u + d u)(x) / (p(x) I)`` and projects.
    ``method="galerkin"`` (default) solves ``P[p v] = (A u + d u) / I`` on the
    retained modes, which is exact on the discrete operator for any ``p``;
    the two coincide when ``p`` is constant.  ``I`` is the integral of
    ``chi`` under the theta rule the solver uses.

    Returns ``(v, certificates)`` with the -1/2, 0 and ess-sup constants of
    ``chi(theta) v(x)``.
    """
    if p.p_min <= P_MIN_TOL:
        raise DegenerateEquilibriumError("p is not bounded away from zero")
    I = chi.discrete_integral(tq)
    if not abs(I) >= 1e-12:
        raise InvalidConfigError(f"chi integrates to {I:.3g} on the theta rule; chi must have a nonzero integral")
    rhs = (basis.lam + d) * u_st.coeffs
    if method == "pointwise":
        vhat = project(on_nodes(SpectralField(rhs), basis) / (p.values * I), basis)
    elif method == "galerkin":
        gram = (basis.modes * (basis.quad_weights * p.values)) @ basis.modes.T
        vhat = SpectralField(np.linalg.solve(gram, rhs / I))
    else:
        raise InvalidConfigError(f"unknown synthesis method {method!r}")
    mass = max(chi.abs_integral, chi.discrete_abs_integral(tq))
    neg = fractional_norm(vhat, -0.5, basis)
    certs = {
        "vhat_minus_half": neg,
        "c_minus_half": neg * mass,
        "c_zero": vhat.norm() * mass,
        "ess_sup": neg * chi.sup_abs,
    }
    return vhat, certs


def synthesize(spec: EquilibriumSpec, cfg_or_parts, method: str = "galerkin") -> SynthesizedTarget:
    """Run :func:`compute_p` and :func:`synthesize_vhat` for one target.

    ``cfg_or_parts`` is a :class:`ModelConfig` or a tuple ``(basis, tq, d, b, f)``.
    """
    if isinstance(cfg_or_parts, ModelConfig):
        c = cfg_or_parts
        basis, tq, d, b, f = c.basis, c.theta, c.d, c.b, c.f
    else:
        basis, tq, d, b, f = cfg_or_parts
    if spec.u_st.m != basis.m:
        raise InvalidConfigError(f"target has {spec.u_st.m} modes, basis has {basis.m}")
    p = compute_p(spec.u_st, b, f, basis)
    vhat, certs = synthesize_vhat(spec.u_st, d, p, spec.chi, basis, tq, method)
    return SynthesizedTarget(spec, vhat, p, spec.chi.discrete_integral(tq), certs)


def target_distance(a: np.ndarray, b: np.ndarray, tq: ThetaQuadrature) -> float:
    """H-distance between the stationary states ``(a, a)`` and ``(b, b)``."""
    diff = np.asarray(a) - np.asarray(b)
    return math.sqrt(h_norm_sq(diff, np.tile(diff, (tq.n, 1)), tq))


def separation(targets, tq: ThetaQuadrature) -> float:
    """Smallest pairwise H-distance among stationary states (``inf`` for one target)."""
    best = math.inf
    for i in range(len(targets)):
        for j in range(i + 1, len(targets)):
            best = min(best, target_distance(targets[i], targets[j], tq))
    return best


class BlendedKernel(DelayKernel):
    """``xi = sum_k w_k(state) chi_k(theta) v_k(x)`` with compactly supported weights.

    ``w_k = clip((rho - dist_k) / (rho - rho_in), 0, 1)`` where ``dist_k`` is
    the H-distance to the k-th stationary state and ``rho_in = plateau * rho``.
    ``w_k`` is 1 on the inner ball and 0 outside the ``rho``-ball.  The flat
    inner region keeps the kernel locally state-independent near each target;
    ``plateau = 0`` gives a pure cone.
    """

    family = "blended"

    def __init__(self, parts: list[SynthesizedTarget], rho: float, tq: ThetaQuadrature,
                 plateau: float = 0.5, declared: KernelBounds | None = None):
        if not parts:
            raise InvalidConfigError("at least one synthesized target is required")
        if not rho > 0:
            raise InvalidConfigError(f"blend radius must be positive, got {rho}")
        if not 0.0 <= plateau < 1.0:
            raise InvalidConfigError("plateau fraction must lie in [0, 1)")
        super().__init__(parts[0].vhat.m, declared)
        self.parts = list(parts)
        self.rho = float(rho)
        self.plateau = float(plateau)
        self.tq = tq
        self.separation = separation([q.target for q in self.parts], tq)
        if not self.rho < 0.5 * self.separation:
            raise InvalidConfigError(
                f"blend radius {self.rho:g} must be below half the target separation {self.separation:g}"
            )

    @property
    def rho_in(self) -> float:
        return self.plateau * self.rho

    def weights(self, state: PhaseState) -> np.ndarray:
        dist = np.array([h_distance_to_constant(state, q.target, self.tq) for q in self.parts])
        return np.clip((self.rho - dist) / (self.rho - self.rho_in), 0.0, 1.0)

    def profiles(self, thetas, state):
        thetas = np.asarray(thetas, dtype=float)
        out = np.zeros((thetas.size, self.m))
        for w, q in zip(self.weights(state), self.parts):
            if w > 0.0:
                out += w * np.outer(q.spec.chi(thetas), q.vhat.coeffs)
        return out

    def natural_bounds(self, tq, basis):
        # the rho-balls are disjoint, so at most one term is active
        mass = [max(q.spec.chi.abs_integral, q.spec.chi.discrete_abs_integral(tq)) for q in self.parts]
        neg = [fractional_norm(q.vhat, -0.5, basis) for q in self.parts]
        l2 = [q.vhat.norm() for q in self.parts]
        return KernelBounds(
            max(a * n for a, n in zip(mass, neg)),
            max(a * n for a, n in zip(mass, l2)),
            max(q.spec.chi.sup_abs * n for q, n in zip(self.parts, neg)),
            sum(a * n for a, n in zip(mass, neg)) / (self.rho - self.rho_in),
        )

    def anchors(self) -> list[PhaseState]:
        """Target states, useful as centres for Lipschitz sampling."""
        return [PhaseState.constant(SpectralField(q.target), self.tq) for q in self.parts]

    def descriptor(self):
        d = super().descriptor()
        d.update(rho=self.rho, plateau=self.plateau, separation=self.separation,
                 targets=[q.to_dict() for q in self.parts])
        return d


def build_stationary_kernel(specs, cfg_or_parts, rho: float, plateau: float = 0.5,
                            method: str = "galerkin") -> BlendedKernel:
    """Synthesize every target and blend the separable kernels."""
    specs = list(specs)
    if not specs:
        raise InvalidConfigError("no targets given")
    parts = [synthesize(s, cfg_or_parts, method) for s in specs]
    tq = cfg_or_parts.theta if isinstance(cfg_or_parts, ModelConfig) else cfg_or_parts[1]
    return BlendedKernel(parts, rho, tq, plateau)


@dataclass
class StationaryReport:
    residual: float
    relative_residual: float
    max_drift: float
    times: np.ndarray = field(repr=False)
    drift: np.ndarray = field(repr=False)
    tol: float = 1e-8
    drift_tol: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.relative_residual < self.tol and self.max_drift < self.drift_tol

    def to_dict(self) -> dict:
        return {"residual": self.residual, "relative_residual": self.relative_residual,
                "max_drift": self.max_drift, "tol": self.tol, "drift_tol": self.drift_tol, "passed": self.passed}


def verify_stationary(kernel: DelayKernel, target, cfg: ModelConfig, T: float, tol: float = 1e-8,
                      drift_tol: float = 1e-4) -> StationaryReport:
    """Residual of the stationary equation at ``target`` and drift of a run started there.

    ``residual = ||(A + d) u - F(u, u)||_{-1/2}``; the relative residual
    divides by ``||(A + d) u||_{-1/2}`` (or is the residual itself for the
    zero target).  The drift is ``max_t ||u(t) - u||`` from constant history.
    """
    u = target.u_st if isinstance(target, EquilibriumSpec) else target
    if cfg.kernel is not kernel:
        cfg = dataclasses.replace(cfg, kernel=kernel)
    basis = cfg.basis
    solver = solver_for(cfg)
    state = PhaseState.constant(u, cfg.theta)
    lhs = (basis.lam + cfg.d) * u.coeffs
    res = fractional_norm(SpectralField(lhs - solver.forcing(state)), -0.5, basis)
    scale = fractional_norm(SpectralField(lhs), -0.5, basis)
    rel = res / scale if scale > 0 else res
    traj = solver.simulate(u, None, T)
    drift = np.sqrt(np.sum((traj.coeffs - u.coeffs) ** 2, axis=1))
    return StationaryReport(float(res), float(rel), float(drift.max()), traj.times, drift, tol, drift_tol)


def sine_target(k: int, amplitude: float, basis: Basis) -> SpectralField:
    """``amplitude * sqrt(2/L) sin(k pi x / L)``, i.e. ``amplitude`` times mode ``k``."""
    if not 1 <= k <= basis.m:
        raise InvalidConfigError(f"mode {k} outside the retained range 1..{basis.m}")
    return SpectralField.mode(k, basis.m, amplitude)
