"""Command-line interface: ``cka-rate {rate,sweep,optimize,reproduce,validate}``."""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import time
from dataclasses import replace

from cka_rate.config import RunConfig, distance_grid, load_config, parse_number
from cka_rate.keyrate import PRACTICAL, SINGLE_PHOTON, practical_rate, single_photon_rate
from cka_rate.model import ProtocolParams
from cka_rate.montecarlo import analytic_counterparts, compare, simulate_gains
from cka_rate.optimizer import optimize_at_distance, optimize_single_photon, sweep

CSV_HEADER = ["L_km", "R", "t", "mu", "nu", "E_z", "e1_x", "Y1_lower", "Q_z", "lambda_EC", "flag"]
FIG3_MISALIGNMENTS = (0.035, 0.18, 0.25)
VALIDATION_DISTANCES = (100.0, 300.0, 500.0)
MIN_VALIDATION_TRIALS = 100_000
# intensities large enough that every simulated quantity sees events
PROBE_PARAMS = ProtocolParams(t=0.3, mu=0.6, nu=0.2)


def _row(p):
    return [
        repr(p.L_km), repr(p.R), repr(p.t), repr(p.mu), repr(p.nu), repr(p.E_z), repr(p.e1_x_upper),
        repr(p.Y1_lower), repr(p.Q_z_total), repr(p.lambda_EC), p.flag,
    ]


def write_csv(points, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for p in points:
        w.writerow(_row(p))


def read_csv(path):
    """Parse an emitted sweep file back into dicts of floats (``flag`` stays a string)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (v if k == "flag" else float(v)) for k, v in r.items()} for r in rows]


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _summary(p):
    return (
        f"L_km={p.L_km:g} R={p.R!r} t={p.t!r} mu={p.mu!r} nu={p.nu!r} E_z={p.E_z!r} "
        f"e1_x={p.e1_x_upper!r} Y1_lower={p.Y1_lower!r} flag={p.flag}"
    )


def _config(args) -> RunConfig:
    cfg = load_config(args.config, args.override or ())
    if args.seed is not None:
        cfg = replace(cfg, optimizer=replace(cfg.optimizer, seed=args.seed))
    if args.out is not None:
        cfg = replace(cfg, output_path=args.out)
    if getattr(args, "protocol", None):
        cfg = replace(cfg, protocol_kind=args.protocol)
    return cfg


def cmd_rate(cfg: RunConfig, t, mu, nu, L) -> int:
    if cfg.protocol_kind == SINGLE_PHOTON:
        p = single_photon_rate(cfg.system, t, L)
    else:
        p = practical_rate(cfg.system, ProtocolParams(t=t, mu=mu, nu=nu), L)
    print(_summary(p))
    return 0


def cmd_optimize(cfg: RunConfig, L) -> int:
    if cfg.protocol_kind == SINGLE_PHOTON:
        res = optimize_single_photon(cfg.system, cfg.optimizer, L)
    else:
        res = optimize_at_distance(cfg.system, cfg.optimizer, L)
    print(_summary(res.best))
    print(f"evaluations={res.evaluations} generations={len(res.trace)}", file=sys.stderr)
    return 0


def cmd_sweep(cfg: RunConfig, workers=1) -> int:
    if not cfg.sweep_grid:
        raise ValueError("sweep grid is empty")
    grid = sorted(cfg.sweep_grid)
    fh, close = _open_out(cfg.output_path)  # fail on unwritable paths before computing
    try:
        points = sweep(cfg.system, cfg.optimizer, grid, cfg.protocol_kind, warm_start=workers <= 1, workers=workers)
        write_csv(points, fh)
    finally:
        if close:
            fh.close()
    return 0


def cmd_reproduce(cfg: RunConfig, figure: str, workers=1) -> int:
    out_dir = cfg.output_path or "."
    os.makedirs(out_dir, exist_ok=True)
    jobs = []
    if figure == "fig2":
        jobs.append(("fig2_practical.csv", replace(cfg, protocol_kind=PRACTICAL)))
        jobs.append(("fig2_single_photon.csv", replace(cfg, protocol_kind=SINGLE_PHOTON)))
    elif figure == "fig3":
        for ed in FIG3_MISALIGNMENTS:
            sys_ed = cfg.system.with_overrides(e_d_x=ed)
            jobs.append((f"fig3_ed_{ed:g}.csv", replace(cfg, system=sys_ed, protocol_kind=PRACTICAL)))
    else:
        raise ValueError(f"unknown figure {figure!r}; choose fig2 or fig3")
    for name, job in jobs:
        path = os.path.join(out_dir, name)
        t0 = time.perf_counter()
        cmd_sweep(replace(job, output_path=path), workers=workers)
        print(f"wrote {path} ({time.perf_counter() - t0:.1f} s)", file=sys.stderr)
    return 0


def validation_report(cfg: RunConfig, trials: int, seed: int, distances=VALIDATION_DISTANCES, params="optimized", backend=None):
    """Text report of Monte Carlo vs closed-form gains and the worst ``|z|``."""
    buf = io.StringIO()
    worst = 0.0
    buf.write(f"# trials={trials} seed={seed} params={params}\n")
    buf.write("L_km,params,quantity,analytic,estimate,std_error,z,events\n")
    for L in distances:
        sets = []
        if params in ("optimized", "both"):
            sets.append(("optimized", optimize_at_distance(cfg.system, cfg.optimizer, L).best.params))
        if params in ("probe", "both"):
            sets.append(("probe", PROBE_PARAMS))
        for label, pp in sets:
            est = simulate_gains(cfg.system, pp, L, trials, seed, backend=backend)
            for c in compare(est, analytic_counterparts(cfg.system, pp, L)):
                z = "n/a" if math.isnan(c.z) else f"{c.z:+.3f}"
                if not math.isnan(c.z):
                    worst = max(worst, abs(c.z))
                buf.write(f"{L:g},{label},{c.name},{c.analytic:.9e},{c.estimate:.9e},{c.std_error:.3e},{z},{c.events}\n")
    buf.write(f"# max |z| = {worst:.3f}\n")
    return buf.getvalue(), worst


def cmd_validate(cfg: RunConfig, trials: int, seed: int, params="optimized", backend=None) -> int:
    t0 = time.perf_counter()
    text, worst = validation_report(cfg, trials, seed, params=params, backend=backend)
    fh, close = _open_out(cfg.output_path)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()
    print(f"validation took {time.perf_counter() - t0:.1f} s", file=sys.stderr)
    return 0 if worst <= 5.0 else 1


def _float(text):
    try:
        return parse_number(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")


def _grid(text):
    try:
        return tuple(parse_number(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad distance list: {text!r}")


def _global_flags(default):
    # the same flags are accepted before and after the subcommand; the
    # subcommand copy suppresses its defaults so it cannot mask earlier values
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default, help="INI file with [system], [optimizer], [sweep], [run] sections")
    common.add_argument("--seed", type=int, default=default, help="seed for the optimizer and the Monte Carlo")
    common.add_argument("--out", default=default, help="output file (directory for reproduce); stdout when omitted")
    common.add_argument(
        "--override", action="append", default=default, metavar="KEY=VALUE", help="override a system or optimizer parameter"
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cka-rate", description="Twin-field conference key rate toolkit.", parents=[_global_flags(None)]
    )
    common = _global_flags(argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rate", parents=[common], help="key rate at explicit parameters")
    p.add_argument("--t", type=_float, required=True)
    p.add_argument("--mu", type=_float)
    p.add_argument("--nu", type=_float)
    p.add_argument("--L", type=_float, required=True, help="total distance in km")
    p.add_argument("--protocol", choices=[PRACTICAL, SINGLE_PHOTON])

    p = sub.add_parser("optimize", parents=[common], help="optimized key rate at one distance")
    p.add_argument("--L", type=_float, required=True)
    p.add_argument("--protocol", choices=[PRACTICAL, SINGLE_PHOTON])

    p = sub.add_parser("sweep", parents=[common], help="optimized rate over a distance grid, as CSV")
    p.add_argument("--grid", type=_grid, help="comma-separated distances in km")
    p.add_argument("--start", type=_float)
    p.add_argument("--stop", type=_float)
    p.add_argument("--step", type=_float)
    p.add_argument("--protocol", choices=[PRACTICAL, SINGLE_PHOTON])
    p.add_argument("--workers", type=int, default=1, help="independent (non warm-started) points on N processes")

    p = sub.add_parser("reproduce", parents=[common], help="regenerate the rate-distance figure data")
    p.add_argument("figure", choices=["fig2", "fig3"])
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("validate", parents=[common], help="Monte Carlo check of the closed-form gains")
    p.add_argument("--trials", type=lambda s: int(float(s)), default=10_000_000)
    p.add_argument("--params", choices=["optimized", "probe", "both"], default="optimized")
    p.add_argument("--backend", choices=["numba", "numpy"])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        if args.command == "rate":
            if cfg.protocol_kind == PRACTICAL:
                if args.mu is None or args.nu is None:
                    parser.error("rate needs --mu and --nu for the practical protocol")
                if not 0 < args.nu < args.mu:
                    parser.error(f"decoy intensity must satisfy 0 < nu < mu (got mu={args.mu}, nu={args.nu})")
            return cmd_rate(cfg, args.t, args.mu, args.nu, args.L)
        if args.command == "optimize":
            return cmd_optimize(cfg, args.L)
        if args.command == "sweep":
            if args.grid is not None:
                cfg = replace(cfg, sweep_grid=args.grid)
            elif any(v is not None for v in (args.start, args.stop, args.step)):
                s0, s1, st = cfg.sweep_grid[0], cfg.sweep_grid[-1], 10.0
                cfg = replace(
                    cfg,
                    sweep_grid=distance_grid(
                        s0 if args.start is None else args.start,
                        s1 if args.stop is None else args.stop,
                        st if args.step is None else args.step,
                    ),
                )
            if not cfg.sweep_grid:
                parser.error("sweep grid is empty")
            return cmd_sweep(cfg, workers=args.workers)
        if args.command == "reproduce":
            return cmd_reproduce(cfg, args.figure, workers=args.workers)
        if args.command == "validate":
            if args.trials < MIN_VALIDATION_TRIALS:
                parser.error(f"validate needs at least {MIN_VALIDATION_TRIALS} trials")
            seed = cfg.optimizer.seed if args.seed is None else args.seed
            return cmd_validate(cfg, args.trials, seed, params=args.params, backend=args.backend)
    except (ValueError, OSError) as exc:
        print(f"cka-rate: error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
