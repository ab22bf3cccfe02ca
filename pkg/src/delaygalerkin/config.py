"""Flat text run configuration: parsing, defaults, emission and model assembly.

A configuration is a set of ``[section]`` blocks holding ``key = value``
lines; ``#`` starts a comment.  Lists are comma separated.  Example::

    [run]
    command = simulate
    preset = nicholson_constant_f
    T = 5.0

    [initial]
    kind = bubble
    amplitude = 0.5

Every key is typed by :data:`SCHEMA`; unknown sections or keys are errors.
Defaults are filled in on parsing, so :func:`emit_config` writes a complete
file and ``parse_config(emit_config(c)) == c``.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DelayGalerkinError, InvalidConfigError
from .kernels import (DelayKernel, KernelBounds, ZeroKernel, constant_in_state, delay_selective,
                      time_profile_from_descriptor)
from .model import ModelConfig, Nonlinearity, SpatialKernel, make_model
from .presets import PRESET_NAMES, preset_values
from .spectral import Basis, SpectralField, project_function

COMMANDS = ("simulate", "synthesize", "certify", "probe")


class ConfigError(InvalidConfigError):
    """Configuration text could not be parsed or validated."""


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _ints(text: str) -> tuple:
    return tuple(int(t) for t in text.split(",") if t.strip())


_PARSERS = {"float": float, "int": int, "str": str.strip, "floats": _floats, "ints": _ints}

SCHEMA = {
    "run": {"command": "str", "preset": "str", "T": "float", "seed": "int"},
    "model": {"L": "float", "m": "int", "quad_order": "int", "d": "float", "r": "float", "dt": "float",
              "theta_nodes": "int", "theta_rule": "str"},
    "nonlinearity": {"family": "str", "param": "float"},
    "spatial_kernel": {"family": "str", "param": "float"},
    "kernel": {"family": "str", "profile": "str", "sigma": "float", "tau_min": "float", "tau_max": "float",
               "tau_scale": "float", "declared_c_minus_half": "float", "declared_c_zero": "float",
               "declared_ess_sup": "float", "declared_lipschitz": "float"},
    "chi": {"family": "str", "value": "float", "center": "float", "halfwidth": "float", "mass": "float",
            "mean": "float", "amplitude": "float", "frequency": "int"},
    "initial": {"kind": "str", "coeffs": "floats", "amplitude": "float", "radius": "float", "index": "int",
                "history": "str"},
    "targets": {"modes": "ints", "amplitudes": "floats", "rho": "float", "plateau": "float", "method": "str"},
    "probe": {"radii": "floats", "T_max": "float", "n_members": "int", "T_transient": "float",
              "T_observe": "float", "workers": "int", "radius": "float"},
    "certify": {"n_states": "int", "n_pairs": "int", "M": "float", "ess_grid": "int"},
    "io": {"out": "str"},
}

KERNEL_KEYS = {
    "zero": (),
    "constant_in_state": ("profile",),
    "delay_selective": ("profile", "sigma", "tau_min", "tau_max", "tau_scale"),
    "stationary": (),
}
CHI_KEYS = {"constant": ("value",), "bump": ("center", "halfwidth", "mass"),
            "cosine": ("mean", "amplitude", "frequency")}
INITIAL_KEYS = {"zero": (), "modes": ("coeffs",), "bubble": ("amplitude",), "random": ("radius",),
                "target": ("index",)}
DECLARED = ("declared_c_minus_half", "declared_c_zero", "declared_ess_sup", "declared_lipschitz")


@dataclass
class RunConfig:
    """Validated configuration with all defaults resolved."""

    command: str
    sections: dict = field(default_factory=dict)

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    @property
    def seed(self):
        return self.get("run", "seed")

    @property
    def preset(self):
        return self.get("run", "preset")


# --------------------------------------------------------------------------- parsing


def _key_lines(text: str) -> dict:
    """Line number of every ``key = value`` line, keyed by ``(section, key)``."""
    where, section = {}, None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]$", s)
        if m:
            section = m.group(1).strip()
        elif s and not s.startswith("#") and "=" in s:
            where[(section, s.split("=", 1)[0].strip())] = i
    return where


def parse_config(text: str, command: str | None = None) -> RunConfig:
    """Parse, type-check and validate configuration text.

    ``command`` (from the command line) fills a missing ``run.command`` and
    must agree with it when both are given.
    """
    cp = configparser.ConfigParser(strict=True, interpolation=None, comment_prefixes=("#",),
                                   inline_comment_prefixes=("#",), empty_lines_in_values=False,
                                   default_section="__defaults__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        where = f"line {line}: " if line else ""
        raise ConfigError(f"{where}{exc.message if hasattr(exc, 'message') else exc}") from None
    lines = _key_lines(text)
    raw = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        raw[section] = {}
        for key, value in cp.items(section):
            line = lines.get((section, key))
            at = f"line {line}: " if line else ""
            if key not in SCHEMA[section]:
                raise ConfigError(f"{at}unknown key {section}.{key}")
            kind = SCHEMA[section][key]
            try:
                raw[section][key] = _PARSERS[kind](value)
            except ValueError:
                raise ConfigError(f"{at}{section}.{key}: cannot read {value!r} as {kind}") from None
    if command is not None:
        given = raw.setdefault("run", {}).setdefault("command", command)
        if given != command:
            raise ConfigError(f"run.command is {given!r} but the {command!r} subcommand was invoked")
    return resolve(raw)


def resolve(raw: dict) -> RunConfig:
    """Fill defaults and validate a typed section dictionary."""
    raw = {s: dict(v) for s, v in raw.items()}
    run = raw.get("run", {})
    command = run.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"run.command must be one of {', '.join(COMMANDS)} (got {command!r})")
    preset = run.get("preset")
    base = {}
    if preset is not None:
        try:
            base = preset_values(preset)
        except InvalidConfigError as exc:
            raise ConfigError(f"run.preset: {exc}") from None

    out = {}
    model = {"L": base.get("L", 1.0), "m": base.get("m", 16), "d": base.get("d", 1.0), "r": base.get("r", 1.0),
             "theta_nodes": base.get("theta_nodes", 32), "theta_rule": "trapezoid"}
    model.update(raw.get("model", {}))
    model.setdefault("dt", model["r"] / 256)
    _check_positive(model, "model", ("L", "d", "r", "dt"))
    _check_positive(model, "model", ("m", "theta_nodes"))
    if model["dt"] > model["r"] / 4 * (1 + 1e-12):
        raise ConfigError(f"model.dt: dt = {model['dt']} exceeds r/4")
    out["model"] = model

    for sec, fam_key, par_key in (("nonlinearity", "b_family", "b_param"), ("spatial_kernel", "f_family", "f_param")):
        s = {}
        if fam_key in base:
            s = {"family": base[fam_key], "param": base[par_key]}
        s.update(raw.get(sec, {}))
        if "family" not in s:
            raise ConfigError(f"{sec}.family is required without a preset")
        s.setdefault("param", 1.0)
        out[sec] = s

    kernel = {}
    if "kernel_family" in base:
        kernel = {"family": base["kernel_family"], "profile": base["profile"], "sigma": base["sigma"],
                  "tau_min": base["tau_min"], "tau_max": base["tau_max"], "tau_scale": base["tau_scale"]}
    user_kernel = raw.get("kernel", {})
    if "family" in user_kernel and user_kernel["family"] != kernel.get("family"):
        kernel = {}
    kernel.update(user_kernel)
    fam = kernel.get("family")
    if fam not in KERNEL_KEYS:
        raise ConfigError(f"kernel.family must be one of {', '.join(KERNEL_KEYS)} (got {fam!r})")
    r = model["r"]
    if fam == "delay_selective":
        kernel.setdefault("profile", "constant:1.0")
        kernel.setdefault("sigma", r / 8)
        kernel.setdefault("tau_min", kernel["sigma"])
        kernel.setdefault("tau_max", r - kernel["sigma"])
        kernel.setdefault("tau_scale", 1.0)
    elif fam == "constant_in_state":
        kernel.setdefault("profile", "constant:1.0")
    _only(kernel, "kernel", fam, KERNEL_KEYS[fam] + DECLARED)
    out["kernel"] = kernel

    chi = dict(raw.get("chi", {}))
    chi.setdefault("family", "constant")
    cf = chi["family"]
    if cf not in CHI_KEYS:
        raise ConfigError(f"chi.family must be one of {', '.join(CHI_KEYS)} (got {cf!r})")
    if cf == "constant":
        chi.setdefault("value", 1.0)
    elif cf == "bump":
        chi.setdefault("center", -0.5 * r)
        chi.setdefault("halfwidth", 0.25 * r)
        chi.setdefault("mass", 1.0)
    else:
        chi.setdefault("frequency", 1)
        if "mean" not in chi or "amplitude" not in chi:
            raise ConfigError("chi: cosine family needs mean and amplitude")
    _only(chi, "chi", cf, CHI_KEYS[cf])
    try:
        time_profile_from_descriptor(chi, r)
    except InvalidConfigError as exc:
        raise ConfigError(f"chi: {exc}") from None
    out["chi"] = chi

    needs_targets = command == "synthesize" or fam == "stationary" or "targets" in raw
    if needs_targets:
        t = dict(raw.get("targets", {}))
        if "modes" not in t or "amplitudes" not in t:
            raise ConfigError("targets: modes and amplitudes are required")
        if len(t["modes"]) != len(t["amplitudes"]) or not t["modes"]:
            raise ConfigError("targets: modes and amplitudes must be non-empty lists of equal length")
        if any(k < 1 or k > model["m"] for k in t["modes"]):
            raise ConfigError(f"targets.modes: mode indices must lie in 1..{model['m']}")
        if any(a == 0 for a in t["amplitudes"]):
            raise ConfigError("targets.amplitudes: targets must be nonzero")
        t.setdefault("rho", 0.3)
        t.setdefault("plateau", 0.5)
        t.setdefault("method", "galerkin")
        if t["method"] not in ("galerkin", "pointwise"):
            raise ConfigError("targets.method must be galerkin or pointwise")
        out["targets"] = t

    init = dict(raw.get("initial", {}))
    init.setdefault("kind", "bubble")
    ik = init["kind"]
    if ik not in INITIAL_KEYS:
        raise ConfigError(f"initial.kind must be one of {', '.join(INITIAL_KEYS)} (got {ik!r})")
    if ik == "bubble":
        init.setdefault("amplitude", 0.5)
    elif ik == "random":
        init.setdefault("radius", 1.0)
    elif ik == "modes" and "coeffs" not in init:
        raise ConfigError("initial.coeffs is required for kind = modes")
    elif ik == "target":
        init.setdefault("index", 1)
        if "targets" not in out or not 1 <= init["index"] <= len(out["targets"]["modes"]):
            raise ConfigError("initial.index must name one of the configured targets")
    if ik == "modes" and len(init["coeffs"]) > model["m"]:
        raise ConfigError(f"initial.coeffs: at most m = {model['m']} coefficients")
    init.setdefault("history", "constant")
    if init["history"] not in ("constant", "zero"):
        raise ConfigError("initial.history must be constant or zero")
    _only(init, "initial", ik, INITIAL_KEYS[ik] + ("history",))
    out["initial"] = init

    run_out = {"command": command, "T": run.get("T", 10.0 * r)}
    if preset is not None:
        run_out["preset"] = preset
    if "seed" in run:
        run_out["seed"] = run["seed"]
    if not run_out["T"] > 0:
        raise ConfigError("run.T must be positive")
    out["run"] = run_out

    if command == "probe" or "probe" in raw:
        p = {"radii": (1.0, 10.0, 100.0), "T_max": 50.0 * r, "n_members": 4, "T_transient": 20.0 * r,
             "T_observe": 10.0 * r, "workers": 1, "radius": 1.0}
        p.update(raw.get("probe", {}))
        if any(x <= 0 for x in p["radii"]):
            raise ConfigError("probe.radii must be positive")
        if p["n_members"] < 2:
            raise ConfigError("probe.n_members must be at least 2")
        out["probe"] = p
    if command == "certify" or "certify" in raw:
        c = {"n_states": 200, "n_pairs": 200, "M": 1.0, "ess_grid": 401}
        c.update(raw.get("certify", {}))
        out["certify"] = c
    out["io"] = {"out": "out", **raw.get("io", {})}
    rc = RunConfig(command, out)
    try:
        build_model(rc)
    except ConfigError:
        raise
    except DelayGalerkinError as exc:
        raise ConfigError(f"invalid model: {exc}") from None
    return rc


def _check_positive(sec: dict, name: str, keys):
    for k in keys:
        if k in sec and not sec[k] > 0:
            raise ConfigError(f"{name}.{k}: {k} must be positive (got {sec[k]})")


def _only(sec: dict, name: str, family: str, allowed):
    for k in sec:
        if k not in ("family", "kind") and k not in allowed:
            raise ConfigError(f"{name}.{k} is not used by family {family!r}")


# --------------------------------------------------------------------------- emission


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_config(rc: RunConfig) -> str:
    """Complete configuration text in schema order."""
    parts = []
    for section, keys in SCHEMA.items():
        values = rc.sections.get(section)
        if values is None:
            continue
        parts.append(f"[{section}]")
        for key in keys:
            if key in values:
                parts.append(f"{key} = {_fmt(values[key])}")
        parts.append("")
    return "\n".join(parts)


def preset_config(name: str, command: str = "simulate", **sections) -> RunConfig:
    """Configuration for a preset with optional extra typed sections."""
    raw = {"run": {"command": command, "preset": name}}
    for k, v in sections.items():
        raw[k] = dict(v)
    return resolve(raw)


# --------------------------------------------------------------------------- assembly


def profile_field(spec: str, basis: Basis) -> SpectralField:
    """x-profile from ``constant:V``, ``mode:K:A`` or ``coeffs:c1,c2,...``."""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "constant":
            value = float(rest)
            return project_function(lambda x: np.full_like(x, value), basis)
        if kind == "mode":
            k, a = rest.split(":")
            return SpectralField.mode(int(k), basis.m, float(a))
        if kind == "coeffs":
            c = np.zeros(basis.m)
            vals = _floats(rest)
            if len(vals) > basis.m:
                raise ConfigError("kernel.profile: more coefficients than modes")
            c[:len(vals)] = vals
            return SpectralField(c)
    except ValueError:
        pass
    raise ConfigError(f"kernel.profile: cannot read {spec!r} (use constant:V, mode:K:A or coeffs:...)")


def chi_profile(rc: RunConfig):
    return time_profile_from_descriptor(rc.sections["chi"], rc.sections["model"]["r"])


def target_specs(rc: RunConfig, basis: Basis):
    from .synthesis import EquilibriumSpec, sine_target

    t = rc.sections["targets"]
    chi = chi_profile(rc)
    return [EquilibriumSpec(sine_target(k, a, basis), chi, f"mode{k}") for k, a in zip(t["modes"], t["amplitudes"])]


def _declared(k: dict):
    vals = {name[len("declared_"):]: k[name] for name in DECLARED if name in k}
    return KernelBounds(**vals) if vals else None


def build_model(rc: RunConfig) -> ModelConfig:
    """Assemble the :class:`ModelConfig` described by ``rc``."""
    s = rc.sections
    mdl, ks = s["model"], s["kernel"]
    b = Nonlinearity(s["nonlinearity"]["family"], s["nonlinearity"]["param"])
    f = SpatialKernel(s["spatial_kernel"]["family"], s["spatial_kernel"]["param"])
    declared = _declared(ks)
    fam = ks["family"]

    def kernel(basis, tq) -> DelayKernel:
        if fam == "zero":
            k = ZeroKernel(basis.m, declared)
        elif fam == "constant_in_state":
            k = constant_in_state(profile_field(ks["profile"], basis), chi_profile(rc), declared)
        elif fam == "delay_selective":
            k = delay_selective(profile_field(ks["profile"], basis), mdl["r"], ks["sigma"], ks["tau_min"],
                                ks["tau_max"], ks["tau_scale"])
            k.declared = declared
        else:
            from .synthesis import build_stationary_kernel

            t = s["targets"]
            k = build_stationary_kernel(target_specs(rc, basis), (basis, tq, mdl["d"], b, f), t["rho"],
                                        t["plateau"], t["method"])
            k.declared = declared
        return k

    return make_model(L=mdl["L"], m=mdl["m"], quad_order=mdl.get("quad_order"), d=mdl["d"], r=mdl["r"],
                      dt=mdl["dt"], theta_nodes=mdl["theta_nodes"], theta_rule=mdl["theta_rule"], b=b, f=f,
                      kernel=kernel, meta={"preset": rc.preset})


def initial_data(rc: RunConfig, cfg: ModelConfig, seed: int | None = None):
    """``(u0, phi)`` for the configured initial condition (``phi=None`` means constant history)."""
    from .diagnostics import unit_direction

    init = rc.sections["initial"]
    basis = cfg.basis
    kind = init["kind"]
    phi = None
    if kind == "zero":
        u0 = SpectralField.zeros(basis.m)
    elif kind == "modes":
        c = np.zeros(basis.m)
        c[:len(init["coeffs"])] = init["coeffs"]
        u0 = SpectralField(c)
    elif kind == "bubble":
        a, L = init["amplitude"], basis.L
        u0 = project_function(lambda x: 4.0 * a * x * (L - x) / L**2, basis)
    elif kind == "target":
        t = rc.sections["targets"]
        i = init["index"] - 1
        u0 = SpectralField.mode(t["modes"][i], basis.m, t["amplitudes"][i])
    else:
        u0 = unit_direction(basis.m, 0 if seed is None else seed) * init["radius"]
    if init["history"] == "zero":
        phi = SpectralField.zeros(basis.m)
    return u0, phi


__all__ = ["RunConfig", "ConfigError", "parse_config", "emit_config", "resolve", "preset_config", "build_model",
           "initial_data", "profile_field", "target_specs", "PRESET_NAMES", "COMMANDS"]
