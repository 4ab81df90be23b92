"""Command-line entry points.

Subcommands: run, verify, mc-energy, mc-moment, uniqueness, sweep-eps.
Exit status 0 means all assertions passed, 1 means an assertion failed (the
CSV/JSON evidence is still written), 2 means a configuration or IO error.
Outputs are byte-identical across reruns and worker counts for identical
manifest inputs.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys

import numpy as np

from .config import (
    RunManifest,
    build_force,
    build_initial,
    build_noise,
    load_config,
    parse_velocity_modes,
    write_csv,
    write_json_report,
)
from .diagnostics import (
    MomentConfig,
    mc_energy_bound,
    mc_moment_bound,
    pathwise_uniqueness_check,
    perturbed_state,
    simulate_paths,
)
from .eps_limit import EpsSweepPlan, epsilon_sweep
from .integrator import DivergedPathError, GalerkinIntegrator, write_snapshot
from .operators import run_inequality_suite
from .spaces import ConfigurationError, build_spaces


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="INI config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config entry (repeatable), e.g. solver.dt=5e-4",
    )
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--paths", type=int, help="Monte Carlo path count override")
    parser.add_argument("--out", metavar="DIR", default=".", help="output directory")
    parser.add_argument("--quiet", action="store_true", help="suppress progress lines")
    parser.add_argument(
        "--workers", type=int, default=1, help="concurrent path workers"
    )
    parser.add_argument(
        "--stamp",
        action="store_true",
        help="record a wall-clock timestamp in the manifest (breaks byte-identity)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acflow",
        description=(
            "Spectral-Galerkin simulation and verification for stochastic "
            "2-D Navier-Stokes with artificial compressibility"
        ),
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("run", help="simulate one sample path")
    _add_common(p)

    p = sub.add_parser("verify", help="randomized operator-inequality suite")
    _add_common(p)
    p.add_argument("--samples", type=int, default=1000, help="random field samples")

    p = sub.add_parser("mc-energy", help="Monte Carlo weighted energy bound")
    _add_common(p)

    p = sub.add_parser("mc-moment", help="Monte Carlo moment bound / implied constant")
    _add_common(p)

    p = sub.add_parser("uniqueness", help="pathwise weighted-difference contraction")
    _add_common(p)

    p = sub.add_parser("sweep-eps", help="vanishing-compressibility sweep")
    _add_common(p)

    return parser


def _setup(args) -> tuple:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"solver.seed={args.seed}")
    if args.paths is not None:
        overrides.append(f"monte_carlo.paths={args.paths}")
        overrides.append(f"sweep.paths={args.paths}")
    setup = load_config(args.config, overrides)
    os.makedirs(args.out, exist_ok=True)
    manifest = RunManifest(command=args.subcommand, setup=setup)
    if args.stamp:
        import datetime

        manifest.timestamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    return setup, manifest


def _finish(manifest: RunManifest, out_dir: str, quiet: bool, ok: bool) -> int:
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(manifest.to_json())
    if not quiet:
        print(f"manifest {manifest.digest()[:12]} -> {path}")
        print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _cmd_run(args) -> int:
    setup, manifest = _setup(args)
    digest = manifest.digest()
    spaces = build_spaces(setup.solver.n_modes)
    force = build_force(setup, spaces)
    noise = build_noise(setup, spaces)
    initial = build_initial(setup, spaces)
    integ = GalerkinIntegrator(spaces, setup.solver, force=force, noise=noise)
    try:
        record = integ.run_path(initial, path_index=0)
    except DivergedPathError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    csv_path = os.path.join(args.out, "run.csv")
    manifest.outputs["run.csv"] = write_csv(
        csv_path, record.CSV_COLUMNS, record.csv_rows(), digest
    )
    snap_path = os.path.join(args.out, "run_final.bin")
    write_snapshot(snap_path, record.final_state, digest)
    manifest.outputs["run_final.bin"] = _file_sha(snap_path)
    if not args.quiet:
        print(
            f"ran {setup.solver.n_steps} steps to t={record.times[-1]:g}; "
            f"|u(T)|={record.l2_u[-1]:.6g}"
        )
    return _finish(manifest, args.out, args.quiet, True)


def _cmd_verify(args) -> int:
    setup, manifest = _setup(args)
    digest = manifest.digest()
    rows, all_pass = run_inequality_suite(args.samples, setup.solver.seed)
    csv_rows = [
        (r["lemma"], r["seed"], r["lhs"], r["rhs"], r["margin"], r["pass"])
        for r in rows
    ]
    manifest.outputs["verify.csv"] = write_csv(
        os.path.join(args.out, "verify.csv"),
        ("lemma", "seed", "lhs", "rhs", "margin", "pass"),
        csv_rows,
        digest,
    )
    failures = [r for r in rows if not r["pass"]]
    summary = {
        "pass": all_pass,
        "samples": args.samples,
        "checks": len(rows),
        "failures": [
            {"lemma": r["lemma"], "seed": r["seed"], "lhs": r["lhs"], "rhs": r["rhs"]}
            for r in failures
        ],
        "seed": setup.solver.seed,
    }
    manifest.outputs["verify.json"] = write_json_report(
        os.path.join(args.out, "verify.json"), summary, digest
    )
    if not args.quiet:
        print(f"{len(rows)} checks, {len(failures)} violations")
    return _finish(manifest, args.out, args.quiet, all_pass)


def _cmd_mc_energy(args) -> int:
    setup, manifest = _setup(args)
    digest = manifest.digest()
    spaces = build_spaces(setup.solver.n_modes)
    force = build_force(setup, spaces)
    noise = build_noise(setup, spaces)
    initial = build_initial(setup, spaces)
    n_paths = setup.get_int("monte_carlo.paths")
    z = setup.get_float("monte_carlo.confidence_z")
    deltas = setup.float_list("monte_carlo.deltas")
    records = simulate_paths(
        spaces, setup.solver, force, noise, initial, n_paths, workers=args.workers
    )
    all_pass = True
    csv_rows = []
    margins = {}
    for delta in deltas:
        mc = MomentConfig(
            moment_p=2.0, delta=delta, n_paths=n_paths, confidence_z=z
        )
        rep = mc_energy_bound(
            spaces, setup.solver, mc, force, noise, initial, records=records
        )
        all_pass = all_pass and rep.passed
        margins[str(delta)] = float(rep.margins().min())
        for i, t in enumerate(rep.times):
            csv_rows.append((delta, t, rep.lhs[i], rep.rhs[i], rep.se[i]))
    manifest.outputs["mc_energy.csv"] = write_csv(
        os.path.join(args.out, "mc_energy.csv"),
        ("delta", "t", "lhs", "rhs", "se"),
        csv_rows,
        digest,
    )
    summary = {
        "pass": all_pass,
        "paths": n_paths,
        "confidence_z": z,
        "min_margin_by_delta": margins,
        "seed": setup.solver.seed,
    }
    manifest.outputs["mc_energy.json"] = write_json_report(
        os.path.join(args.out, "mc_energy.json"), summary, digest
    )
    if not args.quiet:
        print(f"energy bound over {len(deltas)} weight rates: pass={all_pass}")
    return _finish(manifest, args.out, args.quiet, all_pass)


def _cmd_mc_moment(args) -> int:
    setup, manifest = _setup(args)
    digest = manifest.digest()
    spaces = build_spaces(setup.solver.n_modes)
    force = build_force(setup, spaces)
    noise = build_noise(setup, spaces)
    initial = build_initial(setup, spaces)
    n_paths = setup.get_int("monte_carlo.paths")
    z = setup.get_float("monte_carlo.confidence_z")
    tol = setup.get_float("monte_carlo.moment_stability_tol")
    cfg = setup.solver
    records = simulate_paths(
        spaces, cfg, force, noise, initial, n_paths, workers=args.workers
    )
    mc = MomentConfig(
        moment_p=cfg.moment_p, delta=cfg.delta, n_paths=n_paths, confidence_z=z
    )
    full = mc_moment_bound(spaces, cfg, mc, force, noise, initial, records=records)
    half = mc_moment_bound(
        spaces, cfg, mc, force, noise, initial, records=records[: n_paths // 2]
    )
    ok = full.implied_constant is not None and np.isfinite(full.implied_constant)
    spread = None
    if ok and half.implied_constant:
        spread = abs(full.implied_constant - half.implied_constant) / abs(
            full.implied_constant
        )
        ok = spread <= tol
    csv_rows = [(i, v) for i, v in enumerate(full.per_path)]
    manifest.outputs["mc_moment.csv"] = write_csv(
        os.path.join(args.out, "mc_moment.csv"),
        ("path", "sup_statistic"),
        csv_rows,
        digest,
    )
    summary = {
        "pass": bool(ok),
        "moment_p": mc.moment_p,
        "delta": mc.delta,
        "paths": n_paths,
        "lhs": full.lhs,
        "initial_term": full.initial_term,
        "denominator": full.denominator,
        "implied_constant": full.implied_constant,
        "implied_constant_half_ensemble": half.implied_constant,
        "relative_spread": spread,
        "stability_tolerance": tol,
        "seed": cfg.seed,
    }
    manifest.outputs["mc_moment.json"] = write_json_report(
        os.path.join(args.out, "mc_moment.json"), summary, digest
    )
    if not args.quiet:
        print(f"implied constant {full.implied_constant} (spread {spread})")
    return _finish(manifest, args.out, args.quiet, bool(ok))


def _cmd_uniqueness(args) -> int:
    setup, manifest = _setup(args)
    digest = manifest.digest()
    spaces = build_spaces(setup.solver.n_modes)
    force = build_force(setup, spaces)
    noise = build_noise(setup, spaces)
    init_a = build_initial(setup, spaces)
    raw_mode = [t.strip() for t in setup.get("uniqueness.perturb_mode").split(",")]
    if len(raw_mode) != 3:
        raise ConfigurationError("uniqueness.perturb_mode must be 'j,k,d'")
    mode = tuple(int(v) for v in raw_mode)
    amp = setup.get_float("uniqueness.perturb_amplitude")
    c_check = setup.get_float("uniqueness.c_check")
    init_b = perturbed_state(spaces, init_a, mode, amp)
    rep = pathwise_uniqueness_check(
        spaces, setup.solver, force, noise, init_a, init_b, c_check=c_check
    )
    csv_rows = [
        (rep.times[i], rep.weighted_diff[i], rep.weight.samples[i])
        for i in range(len(rep.times))
    ]
    manifest.outputs["uniqueness.csv"] = write_csv(
        os.path.join(args.out, "uniqueness.csv"),
        ("t", "weighted_diff", "weight_r"),
        csv_rows,
        digest,
    )
    summary = {
        "pass": rep.passed,
        "max_increase": rep.max_increase,
        "tolerance": rep.tolerance,
        "perturb_mode": list(mode),
        "perturb_amplitude": amp,
        "seed": setup.solver.seed,
    }
    manifest.outputs["uniqueness.json"] = write_json_report(
        os.path.join(args.out, "uniqueness.json"), summary, digest
    )
    if not args.quiet:
        print(f"max weighted-difference increase {rep.max_increase:.3e}")
    return _finish(manifest, args.out, args.quiet, rep.passed)


def _cmd_sweep(args) -> int:
    setup, manifest = _setup(args)
    digest = manifest.digest()
    spaces = build_spaces(setup.solver.n_modes)
    plan = EpsSweepPlan(
        eps_values=tuple(setup.float_list("sweep.eps_values")),
        base=setup.solver,
        n_paths=setup.get_int("sweep.paths"),
        force_modes=tuple(parse_velocity_modes(setup.get("sweep.force_modes"))),
        noise_trace=setup.get_float("sweep.noise_trace"),
        initial_u=None,
        initial_p=None,
    )
    report = epsilon_sweep(spaces, plan, workers=args.workers)

    snap_raw = setup.get("sweep.snapshot_times").strip()
    if snap_raw:
        snap_times = [float(tok) for tok in snap_raw.split(",") if tok.strip()]
        for eps in plan.eps_values:
            for t_req, state in _sweep_snapshots(spaces, plan, eps, snap_times):
                name = f"sweep_eps{eps:g}_t{t_req:g}.bin"
                path = os.path.join(args.out, name)
                write_snapshot(path, state, digest)
                manifest.outputs[name] = _file_sha(path)

    csv_rows = [
        (
            r.eps,
            r.div_sup,
            r.div_se,
            r.diff_sup,
            r.diff_se,
            r.pressure_energy,
            r.pressure_se,
            r.excluded_paths,
        )
        for r in report.rows
    ]
    manifest.outputs["sweep_eps.csv"] = write_csv(
        os.path.join(args.out, "sweep_eps.csv"),
        (
            "eps",
            "sup_mean_div_sq",
            "div_se",
            "sup_mean_diff_sq",
            "diff_se",
            "pressure_energy",
            "pressure_se",
            "excluded_paths",
        ),
        csv_rows,
        digest,
    )
    summary = {
        "pass": report.passed,
        "divergence_strictly_decreasing": report.divergence_strictly_decreasing,
        "difference_decreasing": report.difference_decreasing,
        "pressure_bounded": report.pressure_bounded,
        "pressure_bound": report.pressure_bound,
        "div_rates": report.div_rates,
        "diff_rates": report.diff_rates,
        "paths": plan.n_paths,
        "seed": setup.solver.seed,
    }
    manifest.outputs["sweep_eps.json"] = write_json_report(
        os.path.join(args.out, "sweep_eps.json"), summary, digest
    )
    if not args.quiet:
        print(
            "sweep:",
            " ".join(f"{r.eps:g}->{r.div_sup:.3e}" for r in report.rows),
        )
    return _finish(manifest, args.out, args.quiet, report.passed)


def _sweep_snapshots(spaces, plan, eps, snap_times):
    """Re-run path 0 of one sweep member, capturing states at the grid times
    nearest the requested ones."""
    from dataclasses import replace

    from .forcing import DeterministicForce, default_noise, sample_increment
    from .integrator import project_initial

    cfg = replace(plan.base, eps=eps)
    force = DeterministicForce(spaces.velocity_from_modes(plan.force_modes).coeffs)
    noise = default_noise(spaces, trace=plan.noise_trace)
    integ = GalerkinIntegrator(spaces, cfg, force=force, noise=noise)
    state = project_initial(spaces, plan.initial_u, plan.initial_p)
    wanted = {
        min(max(int(round(t / cfg.dt)), 0), cfg.n_steps): t for t in snap_times
    }
    out = []
    if 0 in wanted:
        out.append((wanted[0], state))
    for m in range(1, cfg.n_steps + 1):
        inc = sample_increment(integ.noise, cfg.dt, (cfg.seed, 0, m - 1))
        state, _ = integ.step(state, inc)
        if m in wanted:
            out.append((wanted[m], state))
    return out


_COMMANDS = {
    "run": _cmd_run,
    "verify": _cmd_verify,
    "mc-energy": _cmd_mc_energy,
    "mc-moment": _cmd_mc_moment,
    "uniqueness": _cmd_uniqueness,
    "sweep-eps": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.subcommand](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


def _file_sha(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


if __name__ == "__main__":
    sys.exit(main())
