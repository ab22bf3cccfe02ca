"""Independent oracles, certificate audits and long-time probes."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.signal import lfilter

from .errors import InvalidConfigError, NumericalBlowupError
from .model import ModelConfig
from .phase_space import h_norm_sq, random_initial_data, random_phase_state
from .solver import Trajectory, solver_for
from .spectral import SpectralField

# --------------------------------------------------------------------------- constants


@dataclass(frozen=True)
class CertifiedConstants:
    """Constants entering the a-priori bounds, from declared (certified) data.

    ``k1 = (C_b * M_f' * |Omega| * C_{xi,-1/2})^2`` where ``M_f'`` is the
    multiplier bound of ``f`` on ``D(A^{1/2})`` (``= M_f`` for constant ``f``).
    """

    C_b: float
    M_f: float
    M_f_pair: float
    area: float
    c_minus_half: float
    c_zero: float
    lambda1: float
    d: float

    @property
    def K_minus_half(self) -> float:
        return self.C_b * self.M_f_pair * self.area * self.c_minus_half

    @property
    def K_zero(self) -> float:
        return self.C_b * self.M_f * self.area * self.c_zero

    @property
    def k1(self) -> float:
        return self.K_minus_half**2

    @property
    def ball_level(self) -> float:
        """Asymptotic bound for ``||u||^2``: ``k1 / (lambda_1 + 2 d)``."""
        return self.k1 / (self.lambda1 + 2.0 * self.d)

    def scaled(self, factor: float) -> "CertifiedConstants":
        """Copy with both kernel constants multiplied by ``factor`` (used for inversion tests)."""
        return CertifiedConstants(self.C_b, self.M_f, self.M_f_pair, self.area, self.c_minus_half * factor,
                                  self.c_zero * factor, self.lambda1, self.d)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(K_minus_half=self.K_minus_half, K_zero=self.K_zero, k1=self.k1, ball_level=self.ball_level)
        return out


def certified_constants(cfg: ModelConfig) -> CertifiedConstants:
    kb = cfg.kernel_bounds()
    if kb.c_minus_half is None or kb.c_zero is None:
        raise InvalidConfigError(f"kernel family {cfg.kernel.family!r} must declare c_minus_half and c_zero")
    return CertifiedConstants(
        C_b=cfg.b.bound,
        M_f=cfg.f.bound,
        M_f_pair=cfg.f.multiplier_bound(cfg.basis.lambda1),
        area=cfg.L,
        c_minus_half=float(kb.c_minus_half),
        c_zero=float(kb.c_zero),
        lambda1=cfg.basis.lambda1,
        d=cfg.d,
    )


# --------------------------------------------------------------------------- audits

AUDIT_NAMES = ("energy", "delay_bound_minus_half", "delay_bound_zero", "absorbing")


@dataclass
class AuditReport:
    """Margins (RHS - LHS) per inequality along a trajectory."""

    margins: dict
    tol: float
    constants: dict = field(default_factory=dict)

    def worst(self) -> dict:
        return {k: float(v.min()) if v.size else 0.0 for k, v in self.margins.items()}

    def checks(self) -> dict:
        return {k: w >= -self.tol for k, w in self.worst().items()}

    @property
    def passed(self) -> bool:
        return all(self.checks().values())

    def to_dict(self) -> dict:
        return {"constants": self.constants, "tol": self.tol, "worst_margins": self.worst(),
                "checks": self.checks(), "passed": self.passed}


def audit_certificates(traj: Trajectory, cfg: ModelConfig, constants: CertifiedConstants,
                       tol: float | None = None) -> AuditReport:
    """Check the a-priori inequalities on every grid time of ``traj``.

    * ``energy``: ``||u||^2 + int(||A^{1/2}u||^2 + 2d||u||^2) <= ||u0||^2 + k1 t``
    * ``delay_bound_minus_half``: ``|<F, u>| <= C_b M_f' |Omega| C_{xi,-1/2} ||A^{1/2} u||``
    * ``delay_bound_zero``: ``|<F, u>| <= C_b M_f |Omega| C_{xi,0} ||u||``
    * ``absorbing``: ``||u(t)||^2 <= e^{-kt}||u0||^2 + B (1 - e^{-kt})``, ``k = lambda_1 + 2d``

    The default tolerance is a rounding allowance of ``1e-10`` relative to
    the largest right-hand side.
    """
    c = constants
    t = traj.times
    l2sq = traj.norm_l2**2
    u0sq = l2sq[0]
    energy = u0sq + c.k1 * t - traj.energy_functional()
    u = traj.coeffs[:-1]
    pair = np.abs(np.einsum("ij,ij->i", traj.forcing, u))
    h1 = traj.norm_h1[:-1]
    l2 = traj.norm_l2[:-1]
    kappa = c.lambda1 + 2.0 * c.d
    decay = np.exp(-kappa * t)
    absorbing = decay * u0sq + c.ball_level * (1.0 - decay) - l2sq
    margins = {
        "energy": energy,
        "delay_bound_minus_half": c.K_minus_half * h1 - pair,
        "delay_bound_zero": c.K_zero * l2 - pair,
        "absorbing": absorbing,
    }
    if tol is None:
        scale = max(1.0, u0sq + c.k1 * t[-1], float(np.max(c.K_minus_half * h1, initial=0.0)))
        tol = 1e-10 * scale
    return AuditReport(margins, float(tol), c.to_dict())


# --------------------------------------------------------------------------- method of steps


@dataclass
class OracleSolution:
    """Dense RK4 solution with cubic Hermite interpolation; ``history`` for ``t <= 0``."""

    times: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    history: object

    def __post_init__(self):
        self._spline = CubicHermiteSpline(self.times, self.values, self.derivs)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        neg = t <= 0.0
        if np.any(neg):
            out[neg] = self.history(t[neg])
        if np.any(~neg):
            out[~neg] = self._spline(t[~neg])
        return out


def _rk4_affine(y, z, h, g0, gh, g1):
    """One classical RK4 step for ``y' = z y + G(t)`` with stage forcing values."""
    k1 = z * y + g0
    k2 = z * (y + 0.5 * h * k1) + gh
    k3 = z * (y + 0.5 * h * k2) + gh
    k4 = z * (y + h * k3) + g1
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def method_of_steps_oracle(a: float, r: float, history, g, T: float, dt: float, lags=None,
                           substeps: int = 100) -> OracleSolution:
    """Reference solution of ``y'(t) = -a y(t) + g(y(t - lags))`` by the method of steps.

    ``lags`` are positive delays no larger than ``r`` (default: the single lag
    ``r``); ``g`` receives an array whose last axis runs over the lags.
    Time is split into chunks no longer than the smallest lag, so on each
    chunk the delayed arguments are already known and the equation is a
    non-delayed linear ODE with known forcing, integrated by classical RK4 at
    step ``dt / substeps``.
    """
    lags = np.atleast_1d(np.asarray([r] if lags is None else lags, dtype=float))
    if np.any(lags <= 0) or np.any(lags > r * (1 + 1e-12)):
        raise InvalidConfigError("lags must lie in (0, r]")
    h = dt / substeps
    n_total = int(round(T / h))
    if abs(n_total * h - T) > 1e-9 * max(1.0, T):
        n_total = math.ceil(T / h)
    per_chunk = int(math.floor(lags.min() / h + 1e-9))
    if per_chunk < 1:
        raise InvalidConfigError("smallest lag is shorter than the RK4 step")
    z = -float(a)
    y0 = float(np.asarray(history(np.array([0.0])))[0])
    times = h * np.arange(n_total + 1)
    values = np.empty(n_total + 1)
    derivs = np.empty(n_total + 1)
    values[0] = y0
    dense = None
    done = 0

    def past(s):
        out = np.empty_like(s)
        neg = s <= 0.0
        out[neg] = history(s[neg])
        if np.any(~neg):
            out[~neg] = dense(s[~neg])
        return out

    def forcing(ts):
        q = ts[:, None] - lags[None, :]
        return np.asarray(g(past(q.ravel()).reshape(q.shape)), dtype=float).reshape(ts.shape)

    while done < n_total:
        n = min(per_chunk, n_total - done)
        t0 = times[done:done + n]
        g0 = forcing(t0)
        gh = forcing(t0 + 0.5 * h)
        g1 = forcing(t0 + h)
        # y_{i+1} = R y_i + s_i with R, s_i the RK4 responses to y and to the forcing
        R = _rk4_affine(1.0, z, h, 0.0, 0.0, 0.0)
        s = _rk4_affine(0.0, z, h, g0, gh, g1)
        y = lfilter([1.0], [1.0, -R], s, zi=[R * values[done]])[0]
        values[done + 1:done + n + 1] = y
        derivs[done:done + n] = z * values[done:done + n] + g0
        derivs[done + n] = z * values[done + n] + g1[-1]
        done += n
        dense = CubicHermiteSpline(times[:done + 1], values[:done + 1], derivs[:done + 1])
    return OracleSolution(times, values, derivs, history)


# --------------------------------------------------------------------------- convergence helpers


def observed_orders(errors) -> list[float]:
    """``log2(e_i / e_{i+1})`` for errors at successively halved steps."""
    e = np.asarray(errors, dtype=float)
    return [float(np.log2(e[i] / e[i + 1])) for i in range(e.size - 1)]


# --------------------------------------------------------------------------- probes


def unit_direction(m: int, seed: int, decay: float = 1.0) -> SpectralField:
    """Seeded random unit-norm field with coefficient scale ``k**-decay``."""
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(m) * np.arange(1, m + 1, dtype=float) ** (-decay)
    return SpectralField(c / np.linalg.norm(c))


def dissipativity_probe(cfg: ModelConfig, radii, T_max: float, seed: int,
                        constants: CertifiedConstants | None = None) -> dict:
    """Entry times into ``||u||^2 <= 1.05 B`` from data with ``||u0|| = R``.

    The same seeded direction is used for every radius, with constant history
    ``phi = u0``.  ``B = k1 / (lambda_1 + 2d)``.  After entry, the trajectory
    must stay below ``1.10 B``.  A run that never enters is reported as
    ``inconclusive``.  With ``k1 = 0`` the ball is ``{0}`` and the check
    becomes ``||u(t)|| <= ||u0|| e^{-(lambda_1 + d) t} (1 + 1e-8)``.
    """
    radii = [float(R) for R in radii]
    if any(R <= 0 for R in radii):
        raise InvalidConfigError("probe radii must be positive")
    c = constants or certified_constants(cfg)
    solver = solver_for(cfg)
    direction = unit_direction(cfg.m, seed)
    level = 1.05 * c.ball_level
    results = []
    for R in radii:
        traj = solver.simulate(direction * R, None, T_max)
        nsq = traj.norm_l2**2
        entry = {"radius": R}
        if c.k1 == 0.0:
            bound = R * np.exp(-(c.lambda1 + c.d) * traj.times) * (1 + 1e-8)
            ok = bool(np.all(traj.norm_l2 <= bound + 1e-300))
            entry.update(status="decay-verified" if ok else "decay-violated", entry_time=None,
                         max_after_entry=None)
        else:
            inside = np.nonzero(nsq <= level)[0]
            if inside.size == 0:
                entry.update(status="inconclusive", entry_time=None, max_after_entry=None)
            else:
                i0 = int(inside[0])
                peak = float(nsq[i0:].max() / c.ball_level)
                entry.update(entry_time=float(traj.times[i0]), max_after_entry=peak,
                             status="entered" if peak <= 1.10 else "exited")
        entry["final_norm_sq"] = float(nsq[-1])
        results.append(entry)
    times = [e["entry_time"] for e in results if e["entry_time"] is not None]
    monotone = all(times[i] <= times[i + 1] for i in range(len(times) - 1))
    return {"ball_level": c.ball_level, "level": level, "results": results, "monotone": monotone,
            "passed": monotone and all(e["status"] in ("entered", "decay-verified") for e in results)}


def state_samples(traj: Trajectory, n: int, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(u(t_n), u(t_n + theta_j))`` from a trajectory by linear interpolation in time."""
    t = traj.times[n] + thetas
    if t[0] < traj.times[0] - 1e-12:
        raise InvalidConfigError("trajectory too short for a full history window")
    psi = np.stack([np.interp(t, traj.times, traj.coeffs[:, k]) for k in range(traj.coeffs.shape[1])], axis=1)
    psi[-1] = traj.coeffs[n]
    return traj.coeffs[n].copy(), psi


def _distance(a, b, tq):
    return math.sqrt(h_norm_sq(a[0] - b[0], a[1] - b[1], tq))


def semidistance(A, B, tq) -> float:
    """``sup_{a in A} inf_{b in B} d_H(a, b)``."""
    return max(min(_distance(a, b, tq) for b in B) for a in A)


@dataclass
class ProbeReport:
    absorbing_radius_estimate: float
    ball_radius: float
    entry_times: list
    terminal_distances: list
    terminal_diameter: float
    semidistance: float
    hausdorff: float
    certificate_margins: list
    contained_in_ball: bool
    trajectories: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("trajectories")
        return out


def attractor_probe(cfg: ModelConfig, n_members: int, T_transient: float, T_observe: float, seed: int,
                    initial=None, workers: int = 1, radius: float = 1.0,
                    dissipativity: dict | None = None, keep_trajectories: bool = False) -> ProbeReport:
    """Evolve an ensemble and summarize its long-time behaviour.

    Members start from seeded random data in the H-ball of ``radius`` unless
    ``initial`` supplies ``(u0, phi)`` pairs.  The report gives the diameter
    of the terminal ensemble at ``T_transient + 2 T_observe`` and the
    semidistance between the slices at ``T_transient + T_observe`` and
    ``T_transient + 2 T_observe``.
    """
    if n_members < 2 and initial is None:
        raise InvalidConfigError("attractor probe needs at least two members")
    if T_transient < cfg.r:
        raise InvalidConfigError("T_transient must be at least one delay")
    solver = solver_for(cfg)
    tq = cfg.theta
    if initial is None:
        rng = np.random.default_rng(seed)
        initial = [random_initial_data(cfg.basis, tq, rng, radius) for _ in range(n_members)]
    T_end = T_transient + 2.0 * T_observe
    consts = certified_constants(cfg)

    def run(item):
        i, (u0, phi) = item
        try:
            return solver.simulate(u0, phi, T_end)
        except NumericalBlowupError as exc:
            raise NumericalBlowupError(exc.time, f"ensemble member {i}: {exc}") from exc

    items = list(enumerate(initial))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajs = list(pool.map(run, items))
    else:
        trajs = [run(it) for it in items]

    dt = cfg.dt
    i_obs = int(round((T_transient + T_observe) / dt))
    i_end = int(round(T_end / dt))
    slice1 = [state_samples(tr, i_obs, tq.nodes) for tr in trajs]
    slice2 = [state_samples(tr, i_end, tq.nodes) for tr in trajs]
    n = len(trajs)
    dists = [[_distance(slice2[i], slice2[j], tq) for j in range(n)] for i in range(n)]
    i_tr = int(round(T_transient / dt))
    sup_after = max(float(tr.norm_l2[i_tr:].max()) for tr in trajs)
    margins = []
    for tr in trajs:
        rep = audit_certificates(tr, cfg, consts)
        margins.append(rep.worst())
    semi = semidistance(slice2, slice1, tq)
    haus = max(semi, semidistance(slice1, slice2, tq))
    entry = dissipativity["results"] if dissipativity else []
    return ProbeReport(
        absorbing_radius_estimate=sup_after,
        ball_radius=math.sqrt(1.05 * consts.ball_level),
        entry_times=[{"radius": e["radius"], "entry_time": e["entry_time"], "status": e["status"]} for e in entry],
        terminal_distances=dists,
        terminal_diameter=float(max(max(row) for row in dists)),
        semidistance=semi,
        hausdorff=haus,
        certificate_margins=margins,
        contained_in_ball=bool(sup_after**2 <= 1.05 * consts.ball_level),
        trajectories=trajs if keep_trajectories else [],
    )


# --------------------------------------------------------------------------- property probes


def delay_bound_violations(cfg: ModelConfig, n_pairs: int, seed: int, radius: float = 1.0,
                           constants: CertifiedConstants | None = None) -> dict:
    """Count random (state, test field) pairs violating the two delay-term bounds."""
    c = constants or certified_constants(cfg)
    rng = np.random.default_rng(seed)
    solver = solver_for(cfg)
    lam = cfg.basis.lam
    worst_half = worst_zero = -np.inf
    v_half = v_zero = 0
    for _ in range(int(n_pairs)):
        state = random_phase_state(cfg.basis, cfg.theta, rng, radius * 10.0 ** rng.uniform(-1, 1))
        v = rng.standard_normal(cfg.m) * np.arange(1, cfg.m + 1) ** (-rng.uniform(0.0, 2.0))
        F = solver.forcing(state)
        pair = abs(F @ v)
        r_half = pair / (c.K_minus_half * math.sqrt((v * v) @ lam))
        r_zero = pair / (c.K_zero * math.sqrt(v @ v))
        worst_half = max(worst_half, r_half)
        worst_zero = max(worst_zero, r_zero)
        v_half += r_half > 1.0 + 1e-12
        v_zero += r_zero > 1.0 + 1e-12
    return {"violations_minus_half": int(v_half), "violations_zero": int(v_zero),
            "max_ratio_minus_half": float(worst_half), "max_ratio_zero": float(worst_zero)}


def continuous_dependence(cfg: ModelConfig, u0: SpectralField, phi, eps_levels, T: float, seed: int) -> dict:
    """``sup_{t<=T} ||u1 - u2||`` and ``||u1(T) - u2(T)||`` for data perturbed at H-distance ``eps``.

    The perturbation is ``(a z, a z)`` with a seeded unit field ``z`` and
    constant history, so its H-norm is ``a sqrt(1 + r)``.
    """
    solver = solver_for(cfg)
    base = solver.simulate(u0, phi, T)
    z = unit_direction(cfg.m, seed)
    phi_fn = _as_history_fn(phi, u0)
    out, final = [], []
    for eps in eps_levels:
        a = eps / math.sqrt(1.0 + cfg.r)
        pert = solver.simulate(u0 + z * a, lambda th, a=a: phi_fn(th) + a * z.coeffs, T)
        gap = np.sqrt(np.sum((pert.coeffs - base.coeffs) ** 2, axis=1))
        out.append(float(gap.max()))
        final.append(float(gap[-1]))

    def ratios(v):
        return [v[i] / v[i + 1] for i in range(len(v) - 1) if v[i + 1] > 0]

    return {"eps": list(map(float, eps_levels)), "response": out, "ratios": ratios(out),
            "final_response": final, "final_ratios": ratios(final)}


def _as_history_fn(phi, u0):
    if phi is None:
        return lambda th: np.tile(u0.coeffs, (np.size(th), 1))
    if isinstance(phi, SpectralField):
        return lambda th: np.tile(phi.coeffs, (np.size(th), 1))
    return lambda th: np.asarray(phi(np.asarray(th, dtype=float)), dtype=float)


def self_convergence(build, ms, u0_func, T: float) -> dict:
    """``||u^m(T) - u^{2m}(T)||`` for each ``m`` in ``ms``.

    ``build(m)`` returns a :class:`ModelConfig`; ``u0_func(x)`` is the initial
    profile (projected per basis), also used as constant history.
    """
    from .spectral import project_function

    finals = {}
    for m in sorted(set(ms) | {2 * m for m in ms}):
        cfg = build(m)
        u0 = project_function(u0_func, cfg.basis)
        finals[m] = solver_for(cfg).simulate(u0, None, T).coeffs[-1]
    diffs = []
    for m in ms:
        a = np.zeros(2 * m)
        a[:m] = finals[m]
        diffs.append(float(np.linalg.norm(a - finals[2 * m])))
    return {"m": list(ms), "differences": diffs,
            "strictly_decreasing": all(diffs[i + 1] < diffs[i] for i in range(len(diffs) - 1))}
