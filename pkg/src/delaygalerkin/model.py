"""Model data: birth-rate nonlinearity ``b``, spatial kernel ``f`` and :class:`ModelConfig`."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError
from .kernels import DelayKernel, KernelBounds
from .phase_space import ThetaQuadrature, theta_quadrature
from .spectral import Basis, build_basis


@dataclass(frozen=True)
class Nonlinearity:
    """Scalar map ``b`` with bound ``C_b`` and Lipschitz constant ``L_b``.

    Families
    --------
    ``nicholson_abs``  ``p |w| exp(-|w|)``: bounded by ``p/e`` and positive off zero.
    ``nicholson``      ``p w exp(-w)``: the classical birth rate.  Unbounded for
                       ``w < 0``; its constants are valid on ``w >= 0`` only.
    ``tanh``           ``kappa tanh(w)``.
    ``zero``           ``0``.
    """

    family: str
    param: float = 1.0

    def __post_init__(self):
        if self.family not in _B_FAMILIES:
            raise InvalidConfigError(f"unknown nonlinearity family {self.family!r}")
        if not math.isfinite(self.param):
            raise InvalidConfigError("nonlinearity parameter must be finite")

    def __call__(self, w):
        return _B_FAMILIES[self.family](np.asarray(w, dtype=float), self.param)

    @property
    def bound(self) -> float:
        if self.family in ("nicholson_abs", "nicholson"):
            return abs(self.param) / math.e
        if self.family == "tanh":
            return abs(self.param)
        return 0.0

    @property
    def lipschitz(self) -> float:
        return 0.0 if self.family == "zero" else abs(self.param)

    @property
    def positive_only(self) -> bool:
        return self.family == "nicholson"

    def sample_bound(self, span: float = 60.0, n: int = 120001) -> float:
        """Largest ``|b(w)|`` over a dense grid (``w >= 0`` for the literal Nicholson map)."""
        w = np.linspace(0.0 if self.positive_only else -span, span, n)
        return float(np.abs(self(w)).max())

    def descriptor(self) -> dict:
        return {"family": self.family, "param": self.param}


_B_FAMILIES = {
    "nicholson_abs": lambda w, p: p * np.abs(w) * np.exp(-np.abs(w)),
    "nicholson": lambda w, p: p * w * np.exp(-w),
    "tanh": lambda w, p: p * np.tanh(w),
    "zero": lambda w, p: np.zeros_like(w),
}


@dataclass(frozen=True)
class SpatialKernel:
    """Convolution weight ``f`` on ``(-L, L)``.

    ``constant``: ``f = value``.  ``gaussian``: heat kernel
    ``(4 pi alpha)^{-1/2} exp(-s^2 / (4 alpha))``.
    """

    family: str
    param: float = 1.0

    def __post_init__(self):
        if self.family not in ("constant", "gaussian"):
            raise InvalidConfigError(f"unknown spatial kernel family {self.family!r}")
        if self.family == "gaussian" and not self.param > 0:
            raise InvalidConfigError("gaussian width alpha must be positive")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "constant":
            return np.full_like(s, self.param)
        a = self.param
        return np.exp(-s * s / (4.0 * a)) / math.sqrt(4.0 * math.pi * a)

    @property
    def bound(self) -> float:
        """``M_f = sup |f|``."""
        if self.family == "constant":
            return abs(self.param)
        return 1.0 / math.sqrt(4.0 * math.pi * self.param)

    @property
    def slope(self) -> float:
        """``sup |f'|``."""
        if self.family == "constant":
            return 0.0
        a = self.param
        return self.bound * math.exp(-0.5) / math.sqrt(2.0 * a)

    def multiplier_bound(self, lambda1: float) -> float:
        """Bound for multiplication by ``f(. - y)`` on ``D(A^{1/2})``.

        ``||(f v)'|| <= M_f ||v'|| + sup|f'| ||v|| <= (M_f + sup|f'| / sqrt(lambda_1)) ||v'||``.
        Equals ``M_f`` for constant ``f``.
        """
        return self.bound + self.slope / math.sqrt(lambda1)

    def sample_bound(self, L: float, n: int = 20001) -> float:
        return float(np.abs(self(np.linspace(-L, L, n))).max())

    def descriptor(self) -> dict:
        return {"family": self.family, "param": self.param}


@dataclass(eq=False)
class ModelConfig:
    """Operator, data and discretization for one simulation.

    Construct with :func:`make_model`; invariants are checked on creation.
    """

    basis: Basis
    theta: ThetaQuadrature
    d: float
    r: float
    dt: float
    b: Nonlinearity
    f: SpatialKernel
    kernel: DelayKernel
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.d > 0:
            raise InvalidConfigError(f"d must be positive (got {self.d})")
        if not self.r > 0:
            raise InvalidConfigError(f"r must be positive (got {self.r})")
        if not self.dt > 0:
            raise InvalidConfigError(f"dt must be positive (got {self.dt})")
        if self.dt > self.r / 4.0 * (1 + 1e-12):
            raise InvalidConfigError(f"dt = {self.dt} exceeds r/4 = {self.r / 4}")
        if abs(self.theta.r - self.r) > 1e-12 * self.r:
            raise InvalidConfigError("theta quadrature spans a different delay than r")
        if self.kernel.m != self.basis.m:
            raise InvalidConfigError(f"kernel has {self.kernel.m} modes, basis has {self.basis.m}")
        if self.b.sample_bound() > self.b.bound * (1 + 1e-12):
            raise InvalidConfigError("nonlinearity exceeds its declared bound C_b")
        if self.f.sample_bound(self.basis.L) > self.f.bound * (1 + 1e-12):
            raise InvalidConfigError("spatial kernel exceeds its declared bound M_f")
        wsum = float(self.basis.quad_weights.sum())
        if abs(wsum - self.basis.L) > 1e-12 * self.basis.L:
            raise InvalidConfigError(f"spatial weights sum to {wsum}, not L = {self.basis.L}")

    @property
    def L(self) -> float:
        return self.basis.L

    @property
    def m(self) -> int:
        return self.basis.m

    def kernel_bounds(self) -> KernelBounds:
        return self.kernel.declared_bounds(self.theta, self.basis)


def make_model(*, L: float = 1.0, m: int = 16, quad_order: int | None = None, d: float = 1.0,
               r: float = 1.0, dt: float | None = None, theta_nodes: int = 32, theta_rule: str = "trapezoid",
               b: Nonlinearity, f: SpatialKernel, kernel, meta: dict | None = None) -> ModelConfig:
    """Assemble a :class:`ModelConfig`; ``kernel`` may be a callable ``(basis, theta) -> DelayKernel``."""
    basis = build_basis(L, m, quad_order)
    if not r > 0:
        raise InvalidConfigError(f"r must be positive (got {r})")
    tq = theta_quadrature(r, theta_nodes, theta_rule)
    if callable(kernel) and not isinstance(kernel, DelayKernel):
        kernel = kernel(basis, tq)
    return ModelConfig(basis, tq, float(d), float(r), float(r / 256 if dt is None else dt), b, f, kernel,
                       dict(meta or {}))
