"""Command line entry point.

    delaygalerkin simulate   --config run.ini [--out DIR] [--seed N] [--dt-refine K]
    delaygalerkin synthesize --config run.ini
    delaygalerkin certify    --config run.ini --seed N
    delaygalerkin probe      --config run.ini --seed N

Exit status: 0 success, 1 invalid configuration or input, 2 numerical
blowup, 3 failed audit or certification.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import COMMANDS, RunConfig, build_model, emit_config, initial_data, parse_config
from .diagnostics import attractor_probe, audit_certificates, certified_constants, dissipativity_probe
from .errors import DelayGalerkinError, NumericalBlowupError
from .kernels import certify_kernel
from .solver import solver_for

log = logging.getLogger("delaygalerkin")

EXIT_OK, EXIT_INVALID, EXIT_BLOWUP, EXIT_FAILED = 0, 1, 2, 3


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_columns(path: Path, header, columns) -> None:
    rows = [",".join(header)]
    for row in zip(*columns):
        rows.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(rows) + "\n")


# --------------------------------------------------------------------------- commands


def cmd_simulate(rc: RunConfig, out: Path, seed, dt_refine: int) -> int:
    cfg = build_model(rc)
    u0, phi = initial_data(rc, cfg, seed)
    T = rc.sections["run"]["T"]
    traj = solver_for(cfg).simulate(u0, phi, T)
    traj.to_csv(out / "trajectory.csv")
    consts = certified_constants(cfg)
    audit = audit_certificates(traj, cfg, consts)
    report = {"audit": audit.to_dict(), "T": T, "dt": cfg.dt, "m": cfg.m, "steps": int(traj.times.size - 1),
              "final_norm_l2": float(traj.norm_l2[-1])}
    if dt_refine > 0:
        report["refinement"] = _refine(rc, u0, phi, T, dt_refine)
    write_json(out / "audit.json", report)
    log.info("simulate: %d steps, final ||u|| = %.6g, audit %s", traj.times.size - 1, traj.norm_l2[-1],
             "passed" if audit.passed else "FAILED")
    return EXIT_OK if audit.passed else EXIT_FAILED


def _refine(rc: RunConfig, u0, phi, T: float, K: int) -> dict:
    """Final states at ``dt / 2^j`` for ``j = 0..K``; successive differences and observed orders."""
    base_dt = rc.sections["model"]["dt"]
    finals, dts = [], []
    for j in range(K + 1):
        sec = {k: dict(v) for k, v in rc.sections.items()}
        sec["model"]["dt"] = base_dt / 2**j
        cfg = build_model(RunConfig(rc.command, sec))
        finals.append(solver_for(cfg).simulate(u0, phi, T).coeffs[-1])
        dts.append(cfg.dt)
    diffs = [float(np.linalg.norm(finals[j] - finals[j + 1])) for j in range(K)]
    rates = [math.log2(diffs[j] / diffs[j + 1]) if diffs[j + 1] > 0 else None for j in range(K - 1)]
    return {"dt": dts, "differences": diffs, "observed_orders": rates}


def cmd_synthesize(rc: RunConfig, out: Path, seed) -> int:
    from .synthesis import verify_stationary

    cfg = build_model(_with_stationary_kernel(rc))
    kernel = cfg.kernel
    T = rc.sections["run"]["T"]
    verification, drift_cols, header = [], [], ["t"]
    times = None
    for part in kernel.parts:
        rep = verify_stationary(kernel, part.spec, cfg, T)
        verification.append({"label": part.spec.label, **rep.to_dict()})
        times = rep.times
        drift_cols.append(rep.drift)
        header.append(f"drift_{part.spec.label}")
    write_columns(out / "drift.csv", header, [times] + drift_cols)
    cert = certify_kernel(kernel, cfg.basis, cfg.theta, seed=0 if seed is None else seed,
                          anchors=kernel.anchors(), spread=kernel.rho * 1.5)
    artifact = {
        "kernel": kernel.descriptor(),
        "declared_bounds": cfg.kernel_bounds().to_dict(),
        "certification": cert.to_dict(),
        "verification": verification,
    }
    write_json(out / "kernel.json", artifact)
    lines = [f"targets: {len(kernel.parts)}, rho = {kernel.rho:g}, separation = {kernel.separation:.6g}"]
    for v in verification:
        lines.append(f"{v['label']}: relative residual {v['relative_residual']:.3e}, max drift "
                     f"{v['max_drift']:.3e} over T = {T:g} -> {'PASS' if v['passed'] else 'FAIL'}")
    for name, ok in cert.checks.items():
        lines.append(f"certificate {name}: measured {cert.measured[name]:.6g} <= declared "
                     f"{cert.declared[name]:.6g} -> {'PASS' if ok else 'FAIL'}")
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    ok = cert.passed and all(v["passed"] for v in verification)
    return EXIT_OK if ok else EXIT_FAILED


def _with_stationary_kernel(rc: RunConfig) -> RunConfig:
    sec = {k: dict(v) for k, v in rc.sections.items()}
    declared = {k: v for k, v in sec["kernel"].items() if k.startswith("declared_")}
    sec["kernel"] = {"family": "stationary", **declared}
    return RunConfig(rc.command, sec)


def cmd_certify(rc: RunConfig, out: Path, seed) -> int:
    cfg = build_model(rc)
    c = rc.sections["certify"]
    kernel = cfg.kernel
    anchors = kernel.anchors() if hasattr(kernel, "anchors") else None
    spread = kernel.rho * 1.5 if anchors else None
    rep = certify_kernel(kernel, cfg.basis, cfg.theta, n_states=c["n_states"], seed=seed, M=c["M"],
                         n_pairs=c["n_pairs"], ess_grid_n=c["ess_grid"], anchors=anchors, spread=spread)
    write_json(out / "certificate.json", {"kernel": kernel.descriptor(), **rep.to_dict()})
    return EXIT_OK if rep.passed else EXIT_FAILED


def cmd_probe(rc: RunConfig, out: Path, seed) -> int:
    cfg = build_model(rc)
    p = rc.sections["probe"]
    consts = certified_constants(cfg)
    diss = dissipativity_probe(cfg, p["radii"], p["T_max"], seed, consts)
    rep = attractor_probe(cfg, p["n_members"], p["T_transient"], p["T_observe"], seed, workers=p["workers"],
                          radius=p["radius"], dissipativity=diss, keep_trajectories=True)
    for i, traj in enumerate(rep.trajectories):
        traj.to_csv(out / f"member_{i:02d}.csv")
    write_json(out / "probe.json", {
        "constants": consts.to_dict(),
        "margins": rep.certificate_margins,
        "entry_times": diss["results"],
        "ensemble": {k: v for k, v in rep.to_dict().items() if k not in ("certificate_margins", "entry_times")},
        "dissipativity_passed": diss["passed"],
    })
    ok = diss["passed"] and rep.contained_in_ball and all(
        w >= -1e-6 for m in rep.certificate_margins for w in m.values())
    return EXIT_OK if ok else EXIT_FAILED


HANDLERS = {"simulate": cmd_simulate, "synthesize": cmd_synthesize, "certify": cmd_certify, "probe": cmd_probe}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="delaygalerkin", description="Galerkin simulation of state-dependent delay PDEs")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--out", help="output directory (overrides io.out)")
        p.add_argument("--seed", type=int, help="random seed (overrides run.seed)")
        p.add_argument("--dt-refine", type=int, default=0, metavar="K",
                       help="also run K dyadic time-step refinements and report convergence")
    return ap


def run(rc: RunConfig, out: Path | str | None = None, seed: int | None = None, dt_refine: int = 0) -> int:
    """Execute a parsed configuration and write its artifacts; returns the exit status."""
    seed = rc.seed if seed is None else seed
    if rc.command in ("probe", "certify") and seed is None:
        log.error("a seed is required for %s (set run.seed or pass --seed)", rc.command)
        return EXIT_INVALID
    out = Path(out if out is not None else rc.sections["io"]["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(emit_config(rc))
        if rc.command == "simulate":
            return cmd_simulate(rc, out, seed, dt_refine)
        return HANDLERS[rc.command](rc, out, seed)
    except NumericalBlowupError as exc:
        log.error("numerical blowup: %s", exc)
        return EXIT_BLOWUP
    except DelayGalerkinError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text()
        rc = parse_config(text, args.command)
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_INVALID
    except DelayGalerkinError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_INVALID
    if args.dt_refine < 0:
        log.error("--dt-refine must be non-negative")
        return EXIT_INVALID
    return run(rc, args.out, args.seed, args.dt_refine)


if __name__ == "__main__":
    sys.exit(main())
