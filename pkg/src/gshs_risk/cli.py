"""Command-line entry point: ``gshs-risk <command> [options]``."""

from __future__ import annotations

import argparse
import contextlib
import csv
import os
import sys
from collections import defaultdict

from . import _backend
from .config import ConfigError, annotated_defaults, load_config, to_dict
from .harness import (IPS, MC, ExperimentError, ResultTable, emit_results, oracle_report,
                      results_csv, run_sweep, toy_oracle_suite)
from .ttc import DegenerateMotionError, MotionSample, RootPolicy, time_to_collision
from .vehicle import VehicleParams


class CliError(Exception):
    pass


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML experiment configuration")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--format", choices=("csv", "json"), action="append",
                   help="output format; repeat for both (default: config)")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--mu", type=float, action="append", dest="mus",
                   help="awareness ratio; repeat to build a sweep (default: config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gshs-risk",
                                     description="Rare-event collision risk for a two-vehicle lane change.")
    parser.add_argument("--backend", choices=_backend.BACKENDS,
                        help=f"kernel backend (default: ${_backend.ENV_FLAG} or numba)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="splitting estimator and MC baseline over the awareness sweep")
    _common(run)
    run.add_argument("--trials", type=int, help="independent splitting trials per ratio")
    run.add_argument("--particles", type=int, help="particles per trial")
    run.add_argument("--mc-runs", type=int, help="MC runs per ratio")
    run.add_argument("--no-mc", action="store_true", help="skip the MC baseline")

    mc = sub.add_parser("mc", help="MC baseline only")
    _common(mc)
    mc.add_argument("--mc-runs", type=int, help="MC runs per ratio")

    ttc = sub.add_parser("ttc", help="TTC verdicts for a two-vehicle trace")
    ttc.add_argument("trace", help="CSV with columns t, vehicle, x, y and optional vx, vy, ax, ay")
    ttc.add_argument("--out", help="write verdicts here instead of stdout")
    ttc.add_argument("--order", type=int, help="motion order (default: highest given)")
    ttc.add_argument("--policy", choices=[p.value for p in RootPolicy], default=RootPolicy.MIN_POSITIVE.value)
    ttc.add_argument("--lane-width", type=float, default=VehicleParams().width,
                     help="lateral gap below which two vehicles share a lane")
    ttc.add_argument("--length", type=float, default=VehicleParams().length, help="vehicle length")

    oracle = sub.add_parser("oracle", help="estimator against exactly solvable toy problems")
    oracle.add_argument("--seed", type=int, default=0)
    oracle.add_argument("--trials", type=int, default=100)
    oracle.add_argument("--particles", type=int, default=100)
    oracle.add_argument("--skip-barrier", action="store_true", help="only the discrete chains")

    sub.add_parser("print-defaults", help="default configuration with per-field provenance")
    return parser


def _config_from(args):
    config = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output.out_dir"] = args.out
    if args.format:
        changes["output.formats"] = list(dict.fromkeys(args.format))
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.mus:
        changes["estimator.awareness_ratios"] = args.mus
    for flag, path in (("trials", "estimator.trials"), ("particles", "estimator.particles"),
                       ("mc_runs", "estimator.mc_runs")):
        if getattr(args, flag, None) is not None:
            changes[path] = getattr(args, flag)
    return config.replace(**changes) if changes else config


def _sweep(args, methods) -> int:
    config = _config_from(args)
    table = ResultTable(config.seed, to_dict(config))

    def progress(row):
        print(f"mu_r={row.awareness_ratio:<8g} {row.method:<4} mean={row.mean:.4e} "
              f"({row.wall_time:.1f}s)", file=sys.stderr)

    try:
        run_sweep(config, methods=methods, table=table, on_row=progress)
    except KeyboardInterrupt:
        if table.rows:
            paths = emit_results(table, config.output.out_dir, config.output.formats)
            print(f"interrupted; partial results in {', '.join(map(str, paths))}", file=sys.stderr)
        return 130
    paths = emit_results(table, config.output.out_dir, config.output.formats)
    sys.stdout.write(results_csv(table).replace("\r\n", "\n"))
    print(f"wrote {', '.join(map(str, paths))}", file=sys.stderr)
    return 0


# -- ttc on traces ----------------------------------------------------------------

def _read_trace(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise CliError(f"{path}: no samples")
    missing = {"t", "vehicle", "x", "y"} - set(rows[0])
    if missing:
        raise CliError(f"{path}: missing columns {sorted(missing)}")
    tracks = defaultdict(list)
    for line, r in enumerate(rows, start=2):
        try:
            sample = {k: float(v) for k, v in r.items() if k != "vehicle" and v not in ("", None)}
        except ValueError as exc:
            raise CliError(f"{path}:{line}: {exc}") from None
        tracks[r["vehicle"]].append(sample)
    if len(tracks) != 2:
        raise CliError(f"{path}: expected exactly two vehicles, found {len(tracks)}")
    for samples in tracks.values():
        samples.sort(key=lambda s: s["t"])
    return tracks


def _motion(prev, curr, default_dt):
    if "vx" in curr and "vy" in curr:
        vel = (curr["vx"], curr["vy"])
    elif prev is not None and curr["t"] > prev["t"]:
        h = curr["t"] - prev["t"]
        vel = ((curr["x"] - prev["x"]) / h, (curr["y"] - prev["y"]) / h)
    else:
        return None
    ders = [vel]
    if "ax" in curr and "ay" in curr:
        ders.append((curr["ax"], curr["ay"]))
    pos = (curr["x"], curr["y"])
    back = (pos[0] - default_dt * vel[0], pos[1] - default_dt * vel[1]) if prev is None else (prev["x"], prev["y"])
    return MotionSample(back, pos, tuple(ders))


def ttc_verdicts(tracks, *, order=None, policy=RootPolicy.MIN_POSITIVE, lane_width=1.61,
                 length=4.508, sample_dt=0.01):
    (name_a, a), (name_b, b) = sorted(tracks.items())
    b_at = {s["t"]: i for i, s in enumerate(b)}
    out = []
    for i, sa in enumerate(a):
        j = b_at.get(sa["t"])
        if j is None:
            continue
        for sub_name, sub, sub_prev, col_name, col, col_prev in (
                (name_a, sa, a[i - 1] if i else None, name_b, b[j], b[j - 1] if j else None),
                (name_b, b[j], b[j - 1] if j else None, name_a, sa, a[i - 1] if i else None)):
            ms, mc = _motion(sub_prev, sub, sample_dt), _motion(col_prev, col, sample_dt)
            row = {"t": sa["t"], "subject": sub_name, "other": col_name}
            if ms is None or mc is None:
                out.append({**row, "conflict": "", "ttc": "", "point_x": "", "point_y": "",
                            "note": "no velocity"})
                continue
            try:
                res = time_to_collision(ms, mc, same_lane=abs(sub["y"] - col["y"]) < lane_width,
                                        sub_length=length, col_length=length, order=order, policy=policy)
            except DegenerateMotionError as exc:
                out.append({**row, "conflict": "", "ttc": "", "point_x": "", "point_y": "",
                            "note": str(exc)})
                continue
            px, py = res.point if res.point else ("", "")
            out.append({**row, "conflict": res.conflict.name.lower(), "ttc": repr(res.seconds),
                        "point_x": px if px == "" else repr(px), "point_y": py if py == "" else repr(py),
                        "note": ""})
    return out


def _ttc(args) -> int:
    tracks = _read_trace(args.trace)
    rows = ttc_verdicts(tracks, order=args.order, policy=RootPolicy(args.policy),
                        lane_width=args.lane_width, length=args.length)
    fields = ("t", "subject", "other", "conflict", "ttc", "point_x", "point_y", "note")
    try:
        fh = open(args.out, "w", newline="") if args.out else sys.stdout
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc.strerror}") from None
    with fh if args.out else contextlib.nullcontext(fh):
        w = csv.DictWriter(fh, fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return 0


def _oracle(args) -> int:
    cases = toy_oracle_suite(args.seed, trials=args.trials, n_particles=args.particles,
                             include_barrier=not args.skip_barrier)
    print(oracle_report(cases))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.backend:
            _backend.set_backend(args.backend)
            os.environ[_backend.ENV_FLAG] = args.backend
        if args.command == "print-defaults":
            sys.stdout.write(annotated_defaults())
            return 0
        if args.command == "run":
            return _sweep(args, (IPS,) if args.no_mc else None)
        if args.command == "mc":
            return _sweep(args, (MC,))
        if args.command == "ttc":
            return _ttc(args)
        if args.command == "oracle":
            return _oracle(args)
    except (ConfigError, CliError, ExperimentError, RuntimeError, ValueError) as exc:
        print(f"gshs-risk: error: {exc}", file=sys.stderr)
        return 2
    return 1  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
