"""Command line interface: ``holderip {norm,simulate,counterexample,experiment,check}``.

Exit codes: 0 success, 1 invalid configuration, 2 infeasible schedule,
3 a bound check failed under ``--strict``.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .harness import ConfigError, ExperimentConfig, ExperimentReport, run_experiment
from .holder import build_polygonal, holder_modulus, increment_seq_bound, schauder_coefficients, sequential_norm, vertex_norm
from .processes import GeneratorSpec, generate
from .schedule import InfeasibleScheduleError, build_schedule, schedule_from_text, schedule_to_text, validate_schedule

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_STRICT = 0, 1, 2, 3


def write_path_file(fh, x, scale):
    """Header ``n scale`` then one increment per line."""
    x = np.asarray(x, dtype=np.float64)
    fh.write(f"{x.size} {float(scale)!r}\n")
    for v in x:
        fh.write(f"{float(v)!r}\n")


def read_path_file(fh):
    """Inverse of :func:`write_path_file`; returns ``(increments, scale)``."""
    lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ConfigError("empty path file")
    head = lines[0].split()
    try:
        n = int(head[0])
        scale = float(head[1]) if len(head) > 1 else None
        x = np.array([float(v) for v in lines[1:]])
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"malformed path file: {exc}") from exc
    if x.size != n:
        raise ConfigError(f"header announces {n} increments, found {x.size}")
    return x, scale


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _generator(arg: str | None, default: str) -> GeneratorSpec:
    """A generator from a kind name, a JSON object or ``@file.json``."""
    text = arg or default
    try:
        if text.startswith("@"):
            with open(text[1:]) as fh:
                return GeneratorSpec.from_dict(json.load(fh))
        if text.lstrip().startswith("{"):
            return GeneratorSpec.from_dict(json.loads(text))
        return GeneratorSpec(text)
    except (ValueError, KeyError, TypeError, OSError) as exc:
        raise ConfigError(f"bad generator {text!r}: {exc}") from exc


def _strict_exit(args, rep: ExperimentReport) -> int:
    return EXIT_STRICT if args.strict and rep.failures() else EXIT_OK


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_norm(args) -> int:
    with open(args.path) as fh:
        x, scale = read_path_file(fh)
    path = build_polygonal(x, scale)
    alpha = args.alpha if args.alpha is not None else 0.5 - 1.0 / args.p
    coeffs = schauder_coefficients(path, alpha)
    lines = [
        f"n={path.n}",
        f"alpha={alpha!r}",
        f"sequential_norm={sequential_norm(coeffs)!r}",
        f"vertex_norm={vertex_norm(path, alpha)!r}",
        f"increment_seq_bound={increment_seq_bound(path, alpha)!r}",
    ]
    if args.delta is not None:
        lines.append(f"holder_modulus={holder_modulus(path, alpha, args.delta)!r}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = _generator(args.generator, "iid_gaussian").with_seed(args.seed)
    if args.n < 1:
        raise ConfigError("n must be positive")
    x = generate(spec, args.n, replica=args.replica).values
    scale = args.scale if args.scale is not None else 1.0 / math.sqrt(args.n)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_path_file(fh, x, scale)
    else:
        write_path_file(sys.stdout, x, scale)
    return EXIT_OK


def _load_schedule(args):
    if args.schedule:
        with open(args.schedule) as fh:
            try:
                return schedule_from_text(fh.read())
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
    return build_schedule(args.p, args.mode, args.levels, require_static_bound=args.require_static_bound)


def cmd_counterexample(args) -> int:
    if args.action == "build":
        _emit(schedule_to_text(_load_schedule(args)), args.out)
        return EXIT_OK
    if args.action == "validate":
        rep = validate_schedule(_load_schedule(args))
        text = rep.to_csv()
        text += "all-pass\n" if rep.ok else f"failures={len(rep.failures())}\n"
        _emit(text, args.out)
        return EXIT_STRICT if args.strict and not rep.ok else EXIT_OK
    params = {"prefix_length": args.levels}
    if args.schedule:
        params["schedule"] = args.schedule
    if args.floor is not None:
        params["floor"] = args.floor
    if args.require_static_bound:
        params["require_static_bound"] = True
    cfg = ExperimentConfig("counterexample", p=args.p, replicas=args.replicas, seed=args.seed,
                           threads=args.threads, params=params)
    rep = run_experiment(cfg, write=False)
    _emit(rep.to_csv(), args.out)
    return _strict_exit(args, rep)


def cmd_experiment(args) -> int:
    try:
        with open(args.config) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    for key in ("seed", "replicas", "threads"):
        val = getattr(args, key)
        if val is not None and (key != "seed" or args.seed_given):
            d[key] = val
    cfg = ExperimentConfig.from_dict(d)
    if args.name and args.name != cfg.experiment:
        raise ConfigError(f"config describes {cfg.experiment!r}, not {args.name!r}")
    rep = run_experiment(cfg, write=False)
    if cfg.output_dir and not args.out:
        rep.write(cfg.output_dir)
    else:
        _emit(rep.to_csv(), args.out)
    return _strict_exit(args, rep)


def cmd_check(args) -> int:
    gen = _generator(args.generator, json.dumps({"kind": "gf_martingale", "params": {"schedule": "desk", "p": args.p}}))
    params = {"tail_sum_cases": args.tail_sum_cases, "dyadic_n_max": args.dyadic_n_max}
    cfg = ExperimentConfig("inequalities", gen, args.p, tuple(args.n), args.replicas, args.seed,
                           threads=args.threads, params=params)
    rep = run_experiment(cfg, write=False)
    _emit(rep.to_csv(), args.out)
    return _strict_exit(args, rep)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--replicas", type=int, default=None)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--strict", action="store_true", help="exit 3 when a bound check fails")

    ap = argparse.ArgumentParser(prog="holderip", description="Hölder norms, counter-example schedules and Monte Carlo experiments for partial-sum paths.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("norm", parents=[common], help="norms of a polygonal path file")
    p.add_argument("path")
    p.add_argument("--p", type=float, default=4.0)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("simulate", parents=[common], help="write a path file from a generator")
    p.add_argument("--generator", default=None, help="kind, JSON object or @file.json")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--replica", type=int, default=0)
    p.add_argument("--scale", type=float, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("counterexample", parents=[common], help="build, validate or run a schedule")
    p.add_argument("action", choices=["build", "validate", "run"])
    p.add_argument("--p", type=float, default=3.0)
    p.add_argument("--mode", choices=["desk", "faithful"], default="desk")
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--schedule", default=None, help="schedule text file")
    p.add_argument("--floor", type=float, default=None)
    p.add_argument("--require-static-bound", action="store_true")
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("experiment", parents=[common], help="run an experiment from a JSON config")
    p.add_argument("name", nargs="?", default=None)
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("check", parents=[common], help="run the inequality oracles")
    p.add_argument("--generator", default=None)
    p.add_argument("--p", type=float, default=3.0)
    p.add_argument("--n", type=int, nargs="+", default=[256])
    p.add_argument("--tail-sum-cases", type=int, default=1000)
    p.add_argument("--dyadic-n-max", type=int, default=256)
    p.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    raw = list(sys.argv[1:] if argv is None else argv)
    args = ap.parse_args(raw)
    args.seed_given = any(a == "--seed" or a.startswith("--seed=") for a in raw)
    if args.replicas is None:
        args.replicas = 200 if args.command != "experiment" else None
    if args.threads is None:
        args.threads = 1 if args.command != "experiment" else None
    try:
        return args.func(args)
    except InfeasibleScheduleError as exc:
        print(f"infeasible schedule: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, ValueError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
