"""Named model presets built around Nicholson's blowflies birth rate.

Both presets use ``L = 1, d = 1, r = 1, m = 16, dt = r/256`` and 32 theta
nodes, the bounded birth rate ``p |w| exp(-|w|)`` with ``p = 20`` and a
delay-selective kernel whose bump (half-width ``r/8``) moves between lags
``r/8`` and ``7r/8`` as ``||u(t)||`` grows.  The x-profile is the constant
function 1 projected onto the retained modes.

``nicholson_constant_f`` uses ``f = 1`` (local-in-space birth term);
``nicholson_gaussian_f`` uses the heat kernel with ``alpha = 0.05``.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidConfigError
from .kernels import delay_selective
from .model import ModelConfig, Nonlinearity, SpatialKernel, make_model
from .spectral import project_function

PRESET_NAMES = ("nicholson_constant_f", "nicholson_gaussian_f")

BASE = {
    "L": 1.0,
    "m": 16,
    "d": 1.0,
    "r": 1.0,
    "theta_nodes": 32,
    "b_family": "nicholson_abs",
    "b_param": 20.0,
    "kernel_family": "delay_selective",
    "sigma": 0.125,
    "tau_min": 0.125,
    "tau_max": 0.875,
    "tau_scale": 1.0,
    "profile": "constant:1.0",
}

PRESETS = {
    "nicholson_constant_f": {**BASE, "f_family": "constant", "f_param": 1.0},
    "nicholson_gaussian_f": {**BASE, "f_family": "gaussian", "f_param": 0.05},
}


def preset_values(name: str) -> dict:
    if name not in PRESETS:
        raise InvalidConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    return dict(PRESETS[name])


def constant_profile_field(value: float):
    """Kernel factory helper: ``basis -> projection of the constant function``."""
    return lambda basis: project_function(lambda x: np.full_like(x, value), basis)


def nicholson(name: str = "nicholson_constant_f", **overrides) -> ModelConfig:
    """Build a preset model; keyword overrides replace preset values (``m``, ``dt``, ...)."""
    v = preset_values(name)
    v.update(overrides)
    r = v["r"]
    value = float(str(v["profile"]).split(":", 1)[1])

    def kernel(basis, tq):
        return delay_selective(constant_profile_field(value)(basis), r, v["sigma"], v["tau_min"],
                               v["tau_max"], v["tau_scale"])

    return make_model(L=v["L"], m=v["m"], quad_order=v.get("quad_order"), d=v["d"], r=r,
                      dt=v.get("dt", r / 256), theta_nodes=v["theta_nodes"],
                      b=Nonlinearity(v["b_family"], v["b_param"]), f=SpatialKernel(v["f_family"], v["f_param"]),
                      kernel=kernel, meta={"preset": name})
