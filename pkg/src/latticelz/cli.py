"""Command-line surface: ground, scan-ground, sweep, scan-velocity,
spectrum, lz2, params.

Every data-producing command writes its outputs plus a manifest into an
output directory; reruns with the same config and seed produce identical
manifest digests.  Reductions inside the physics code are fixed-order, so
the thread count never changes results.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, io as lzio
from .groundstate import find_ground, ground_scan
from .observables import spectrum as compute_spectrum
from .sweep import (
    SweepRunConfig,
    fit_polynomial,
    run_sweep,
    schedule_for_velocity,
    velocity_scan,
)
from .twolevel import lz_analytic, lz_integrate, two_level_config_for

__all__ = ["main"]


def _add_common(parser: argparse.ArgumentParser, config_required: bool) -> None:
    parser.add_argument("--config", type=Path, required=config_required,
                        help="run configuration file")
    parser.add_argument("--out-dir", type=Path, default=None,
                        help="output directory (overrides [output] dir)")
    parser.add_argument("--seed", type=int, default=None,
                        help="rng seed (overrides config)")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker processes for scans")
    parser.add_argument("--checkpoint-every", type=int, default=None,
                        help="steps between checkpoints (overrides config)")
    parser.add_argument("--resume", type=Path, default=None,
                        help="checkpoint directory to resume from")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latticelz",
        description="lattice Landau-Zener mean-field batch simulator",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("params", help="print parameter presets")
    _add_common(p, config_required=False)

    p = sub.add_parser("lz2", help="two-level sweep against the exact formula")
    p.add_argument("--coupling", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--endpoint-factor", type=float, default=40.0)
    p.add_argument("--boundary-basis", choices=("adiabatic", "diabatic"),
                   default="adiabatic")
    _add_common(p, config_required=False)

    for name, help_text in (
        ("ground", "imaginary-time ground state at fixed detuning"),
        ("scan-ground", "ground states over a detuning list"),
        ("sweep", "full sweep: prepare, seed, ramp, hold"),
        ("scan-velocity", "sweeps over a list of velocities"),
        ("spectrum", "vibrational spectrum of a recorded series"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p, config_required=True)

    return parser


def _out_dir(args, resolver: lzio.ConfigResolver | None, default: str) -> Path:
    configured = resolver.output_dir(default) if resolver is not None \
        else Path(default)
    return args.out_dir if args.out_dir is not None else configured


def _finish_run(out_dir: Path, files: list[Path], config_echo: dict, seed,
                warnings, started: float) -> str:
    _, digest = lzio.write_manifest(
        out_dir, config_echo=config_echo, seed=seed, warnings=warnings,
        files=files, started=started, finished=time.time())
    return digest


def _cmd_params(args) -> int:
    print(f"latticelz {__version__} parameter presets")
    for preset in lzio.PRESETS.values():
        print(f"  {preset.name}: t1={preset.t1} t2={preset.t2} u={preset.u} "
              f"omega={preset.omega}")
        print(f"      {preset.note}")
    print("harmonic-approximation onsite interaction ratios:")
    for label, value in lzio.interaction_ratios():
        print(f"  {label} = {value}")
    return 0


def _cmd_lz2(args) -> int:
    cfg = two_level_config_for(args.coupling, args.lam,
                               endpoint_factor=args.endpoint_factor,
                               boundary_basis=args.boundary_basis)
    result = lz_integrate(cfg)
    p_exact = lz_analytic(args.coupling, args.lam)
    print(f"Lambda={result.lam_param:.6f}")
    print(f"P_analytic={p_exact:.6f}")
    print(f"P_numeric={result.p_numeric:.6f}")
    print(f"P_diabatic_raw={result.p_diabatic:.6f}")
    if args.out_dir is not None:
        started = time.time()
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        traj = lzio.write_columns(
            out / "two_level.tsv",
            ["time", "re_x", "im_x", "re_y", "im_y"],
            [result.times, result.amplitudes[:, 0].real,
             result.amplitudes[:, 0].imag, result.amplitudes[:, 1].real,
             result.amplitudes[:, 1].imag])
        echo = {"coupling": args.coupling, "lambda": args.lam,
                "endpoint_factor": args.endpoint_factor,
                "boundary_basis": args.boundary_basis}
        _finish_run(out, [traj], echo, seed=None,
                    warnings=result.warnings, started=started)
    return 0


def _cmd_ground(args) -> int:
    started = time.time()
    resolver = lzio.ConfigResolver(lzio.parse_config(args.config), args.config)
    params = resolver.model()
    cfg = resolver.ground(require_detuning=True)
    out_dir = _out_dir(args, resolver, "ground_out")
    resolver.finish()
    if args.seed is not None:
        cfg = replace(cfg, rng_seed=args.seed)

    result = find_ground(cfg, params)
    out_dir.mkdir(parents=True, exist_ok=True)
    snap = lzio.write_snapshot(result.field, out_dir / "ground.snap")
    report = {
        "detuning": cfg.detuning,
        "z_tot": result.z_tot,
        "energy": result.energy,
        "converged": result.report.converged,
        "steps": result.report.steps,
        "residual": result.report.residual,
        "phase_log": result.report.phase_log,
    }
    report_path = out_dir / "ground_report.json"
    report_path.write_text(json.dumps(report, sort_keys=True, indent=1),
                           encoding="ascii")
    echo = {"params": asdict(params), "ground": _ground_echo(cfg)}
    digest = _finish_run(out_dir, [snap, report_path], echo, cfg.rng_seed,
                         result.report.warnings, started)
    print(f"ground: detuning={cfg.detuning:g} z_tot={result.z_tot:.6f} "
          f"energy={result.energy:.9g} converged={result.report.converged}")
    print(f"manifest_digest={digest}")
    return 0


def _ground_echo(cfg) -> dict:
    echo = asdict(cfg)
    if not isinstance(echo.get("init"), str):
        echo["init"] = "provided-field"
    return echo


def _cmd_scan_ground(args) -> int:
    started = time.time()
    resolver = lzio.ConfigResolver(lzio.parse_config(args.config), args.config)
    params = resolver.model()
    base_cfg = resolver.ground()
    scan = resolver.scan_options("detunings")
    out_dir = _out_dir(args, resolver, "ground_scan_out")
    resolver.finish()
    if args.seed is not None:
        base_cfg = replace(base_cfg, rng_seed=args.seed)

    points = ground_scan(sorted(scan["detunings"]), params,
                         warm_start=scan["warm_start"], base_cfg=base_cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = lzio.write_columns(
        out_dir / "ground_scan.tsv",
        ["detuning", "z_tot", "energy", "converged", "steps",
         "x2_of_x", "y2_of_x", "x2_of_y", "y2_of_y"],
        [
            [p.detuning for p in points],
            [p.z_tot for p in points],
            [p.energy for p in points],
            [float(p.converged) for p in points],
            [float(p.steps) for p in points],
            [p.widths_x[0] for p in points],
            [p.widths_x[1] for p in points],
            [p.widths_y[0] for p in points],
            [p.widths_y[1] for p in points],
        ])
    echo = {"params": asdict(params), "ground": _ground_echo(base_cfg),
            "detunings": sorted(scan["detunings"]),
            "warm_start": scan["warm_start"]}
    digest = _finish_run(out_dir, [table], echo, base_cfg.rng_seed, [], started)
    for p in points:
        print(f"detuning={p.detuning:g} z_tot={p.z_tot:.6f} "
              f"converged={p.converged}")
    print(f"manifest_digest={digest}")
    return 0


def _build_sweep_config(args) -> tuple[SweepRunConfig, Path]:
    resolver = lzio.ConfigResolver(lzio.parse_config(args.config), args.config)
    params = resolver.model()
    schedule = resolver.schedule()
    opts = resolver.sweep_options()
    ground_cfg = None
    if schedule is not None:
        ground_cfg = resolver.ground(
            default_detuning=schedule.detuning(schedule.t_i))
    out_dir = _out_dir(args, resolver, "sweep_out")
    resolver.finish()
    seed = args.seed if args.seed is not None else ground_cfg.rng_seed
    ground_cfg = replace(ground_cfg, rng_seed=seed)
    checkpoint_every = (args.checkpoint_every if args.checkpoint_every is not None
                        else opts["checkpoint_every"])
    cfg = SweepRunConfig(
        params=params, schedule=schedule,
        seed_fraction=opts["seed_fraction"], seed_phase=opts["seed_phase"],
        stride=opts["stride"], checkpoint_every=checkpoint_every,
        out_dir=out_dir, ground=ground_cfg, rng_seed=seed)
    return cfg, out_dir


def _write_sweep_outputs(out_dir: Path, cfg: SweepRunConfig, result,
                         started: float) -> str:
    out_dir.mkdir(parents=True, exist_ok=True)
    files = [lzio.write_series(result.series, out_dir / "series.tsv")]
    for label, field in result.snapshots.items():
        files.append(lzio.write_snapshot(field, out_dir / f"{label}.snap"))
    summary = {
        "z_sweep_end": result.z_sweep_end,
        "p_iex": result.p_iex,
        "delta_f_y": result.delta_f_y,
        "final_norm": result.final_field.norm(),
    }
    summary_path = out_dir / "result.json"
    summary_path.write_text(json.dumps(summary, sort_keys=True, indent=1),
                            encoding="ascii")
    files.append(summary_path)
    return _finish_run(out_dir, files, lzio.sweep_config_echo(cfg),
                       cfg.rng_seed, result.warnings, started)


def _cmd_sweep(args) -> int:
    started = time.time()
    cfg, out_dir = _build_sweep_config(args)
    resume = None
    if args.resume is not None:
        resume = lzio.read_checkpoint(args.resume)
        if resume.config_echo != lzio.sweep_config_echo(cfg):
            raise lzio.ConfigError(
                "checkpoint was produced by a different configuration",
                path=args.resume)
    result = run_sweep(cfg, resume_from=resume)
    digest = _write_sweep_outputs(out_dir, cfg, result, started)
    print(f"sweep: lambda={cfg.schedule.lam:g} z_sweep_end="
          f"{result.z_sweep_end:.6f} p_iex={result.p_iex:.6f} "
          f"delta_f_y={result.delta_f_y:.6g}")
    print(f"manifest_digest={digest}")
    return 0


def _cmd_scan_velocity(args) -> int:
    started = time.time()
    resolver = lzio.ConfigResolver(lzio.parse_config(args.config), args.config)
    params = resolver.model()
    schedule = resolver.schedule()
    opts = resolver.sweep_options()
    scan = resolver.scan_options("lambdas")
    ground_cfg = None
    if schedule is not None:
        ground_cfg = resolver.ground(
            default_detuning=-scan.get("edge_detuning", 1e-3))
    out_dir = _out_dir(args, resolver, "scan_out")
    resolver.finish()
    seed = args.seed if args.seed is not None else ground_cfg.rng_seed
    base = SweepRunConfig(
        params=params, schedule=schedule,
        seed_fraction=opts["seed_fraction"], seed_phase=opts["seed_phase"],
        stride=opts["stride"], ground=replace(ground_cfg, rng_seed=seed),
        rng_seed=seed)

    rows = velocity_scan(base, scan["lambdas"],
                         edge_detuning=scan["edge_detuning"],
                         threads=max(args.threads, 1))
    out_dir.mkdir(parents=True, exist_ok=True)
    files = [lzio.write_columns(
        out_dir / "velocity_scan.tsv",
        ["lambda", "p_iex", "delta_f_y", "z_sweep_end", "f_y_final"],
        [[r.lam for r in rows], [r.p_iex for r in rows],
         [r.delta_f_y for r in rows], [r.z_sweep_end for r in rows],
         [r.f_y_final for r in rows]])]
    warnings = [f"lambda={r.lam:g}: {r.error}" for r in rows if r.error]

    good = [r for r in rows if r.error is None and np.isfinite(r.p_iex)]
    if len(good) >= 6:
        logs = np.log10([r.lam for r in good])
        for channel in ("p_iex", "delta_f_y"):
            values = np.array([getattr(r, channel) for r in good])
            if not np.all(np.isfinite(values)):
                continue
            coeffs, residuals = fit_polynomial(logs, values, degree=5)
            files.append(lzio.write_columns(
                out_dir / f"fit_{channel}.tsv",
                ["log10_lambda", channel, "fit_residual"],
                [logs, values, residuals]))
            meta = out_dir / f"fit_{channel}_coeffs.json"
            meta.write_text(json.dumps(
                {"basis": "powers of log10(lambda)", "degree": 5,
                 "coefficients": list(coeffs)}, indent=1), encoding="ascii")
            files.append(meta)

    echo = {"params": asdict(params),
            "schedule": asdict(schedule),
            "sweep": opts, "scan": scan,
            "ground": _ground_echo(base.ground)}
    digest = _finish_run(out_dir, files, echo, seed, warnings, started)
    for r in rows:
        print(f"lambda={r.lam:g} p_iex={r.p_iex:.6f} delta_f_y={r.delta_f_y:.6g}"
              + (f" ERROR: {r.error}" if r.error else ""))
    print(f"manifest_digest={digest}")
    return 0


def _cmd_spectrum(args) -> int:
    started = time.time()
    resolver = lzio.ConfigResolver(lzio.parse_config(args.config), args.config)
    opts = resolver.spectrum_options()
    out_dir = _out_dir(args, resolver, "spectrum_out")
    resolver.finish()

    series = lzio.read_series(opts["input"])
    result = compute_spectrum(series, taper=opts["taper"],
                              detrend=opts["detrend"],
                              window_start=opts["window_start"])
    out_dir.mkdir(parents=True, exist_ok=True)
    order = np.argsort(result.nu)
    files = [lzio.write_columns(
        out_dir / "spectrum.tsv",
        ["nu", "s_x_re", "s_x_im", "s_y_re", "s_y_im", "s_x_abs", "s_y_abs"],
        [result.nu[order], result.s_x[order].real, result.s_x[order].imag,
         result.s_y[order].real, result.s_y[order].imag,
         np.abs(result.s_x[order]), np.abs(result.s_y[order])])]
    meta_path = out_dir / "spectrum_meta.json"
    meta_path.write_text(json.dumps({
        "window_start": result.window_start,
        "window_length": result.window_length,
        "taper": result.taper,
        "detrended": result.detrended,
        "input": str(opts["input"]),
    }, sort_keys=True, indent=1), encoding="ascii")
    files.append(meta_path)
    echo = {"spectrum": {k: str(v) for k, v in opts.items()}}
    digest = _finish_run(out_dir, files, echo, None, [], started)
    print(f"spectrum: {len(result.nu)} bins over window "
          f"{result.window_length:g}")
    print(f"manifest_digest={digest}")
    return 0


_COMMANDS = {
    "params": _cmd_params,
    "lz2": _cmd_lz2,
    "ground": _cmd_ground,
    "scan-ground": _cmd_scan_ground,
    "sweep": _cmd_sweep,
    "scan-velocity": _cmd_scan_velocity,
    "spectrum": _cmd_spectrum,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except lzio.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except lzio.SnapshotFormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 2
    except lzio.SeriesFormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
