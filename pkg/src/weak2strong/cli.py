"""``w2s-lab`` command-line front end.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or domain error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

from .experiments import (
    PRESETS,
    ConfigError,
    ExperimentConfig,
    SchemaError,
    preset,
    read_results,
    run_experiment,
    write_results,
)
from .mp_stieltjes import DomainError
from .theory import LinearProblemParams, classify_phase, predict

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

# subcommand -> experiment kinds it accepts
RUN_KINDS = {
    "simulate": ("ContourGrid", "ZetaSweep", "DoubleDescent", "FeatureTransfer", "PhaseMap"),
    "grid": ("ContourGrid", "PhaseMap"),
    "sweep": ("ZetaSweep", "DoubleDescent"),
    "feature": ("FeatureTransfer",),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _print_json(obj) -> None:
    print(json.dumps(_json_safe(obj), indent=2))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="w2s-lab", description="Weak-to-strong generalization lab: theory, simulation and plots.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    t = sub.add_parser("theory", help="limiting risks for one parameter point")
    t.add_argument("--lambda-t", type=float, default=0.25)
    t.add_argument("--lambda-s", type=float, default=0.25)
    t.add_argument("--gamma-t", type=float, default=0.25)
    t.add_argument("--gamma-s", type=float, default=0.25)
    t.add_argument("--sigma", type=float, default=1.0)
    t.add_argument("--zeta", type=float, default=0.0)

    ph = sub.add_parser("phase", help="classify the weak-to-strong regime of a teacher")
    ph.add_argument("--lambda-t", type=float, required=True)
    ph.add_argument("--gamma-t", type=float, default=0.25)
    ph.add_argument("--gamma-s", type=float, default=0.25)
    ph.add_argument("--sigma", type=float, default=1.0)

    for name in RUN_KINDS:
        r = sub.add_parser(name, help=f"run an experiment ({', '.join(RUN_KINDS[name])})")
        src = r.add_mutually_exclusive_group(required=True)
        src.add_argument("--preset", help=f"one of: {', '.join(PRESETS)}")
        src.add_argument("--config", help="JSON experiment config file")
        r.add_argument("--d", type=int, help="override the dimension (sample sizes scale along)")
        r.add_argument("--seed", type=int, help="base seed (default: the config's)")
        r.add_argument("--trials", type=int)
        r.add_argument("--out", help="output path")
        r.add_argument("--format", choices=("csv", "json"), help="default: from the --out extension, else csv")
        r.add_argument("--threads", type=int, help="worker threads (env W2S_THREADS; default: all cores)")
        r.add_argument("--show-config", action="store_true", help="print the resolved config and exit")
        r.add_argument("--quiet", action="store_true", help="no progress output")

    pl = sub.add_parser("plot", help="render an SVG from a result file")
    pl.add_argument("in_path")
    pl.add_argument("--kind", choices=("contour", "curve"))
    pl.add_argument("--out", required=True)

    v = sub.add_parser("validate", help="run the acceptance checks")
    v.add_argument("--level", choices=("quick", "full"), default="quick")
    return p


def _threads(args) -> int | None:
    if args.threads is not None:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.threads
    env = os.environ.get("W2S_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"W2S_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise UsageError("W2S_THREADS must be >= 1")
        return n
    return None


def _load_config(args) -> ExperimentConfig:
    if args.preset:
        cfg = preset(args.preset, d=args.d)
    else:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        cfg = ExperimentConfig.from_dict(raw)
        if args.d is not None:
            cfg = cfg.replace(d=args.d)
    changes = {}
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    return cfg.replace(**changes) if changes else cfg


def _check_writable(path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    if not os.path.isdir(directory):
        raise OSError(f"output directory {directory} does not exist")
    if not os.access(directory, os.W_OK):
        raise OSError(f"output directory {directory} is not writable")


def cmd_theory(args) -> int:
    params = LinearProblemParams(args.gamma_t, args.gamma_s, args.sigma, args.lambda_t, args.lambda_s, args.zeta)
    pred = predict(params)
    regime = None
    if args.lambda_t > 0:
        regime = classify_phase(args.lambda_t, args.gamma_t, args.gamma_s, args.sigma).regime.value
    _print_json(
        {
            "loss_teacher": pred.loss_teacher,
            "loss_student": pred.loss_student,
            "gap": pred.gap,
            "delta_gamma": pred.delta_gamma,
            "regime": regime,
        }
    )
    return EXIT_OK


def cmd_phase(args) -> int:
    _print_json(classify_phase(args.lambda_t, args.gamma_t, args.gamma_s, args.sigma).to_dict())
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args)
    if cfg.kind not in RUN_KINDS[args.command]:
        raise ConfigError("kind", f"{cfg.kind} cannot be run by '{args.command}' (accepts {RUN_KINDS[args.command]})")
    threads = _threads(args)
    if args.show_config:
        _print_json(cfg.to_dict())
        return EXIT_OK
    if not args.out:
        raise UsageError("--out is required")
    fmt = args.format or ("json" if args.out.endswith(".json") else "csv")
    _check_writable(args.out)

    def progress(done, total):
        if not args.quiet:
            print(f"[{cfg.name}] {done}/{total}", file=sys.stderr)

    records = run_experiment(cfg, threads=threads, progress=progress)
    write_results(records, args.out, fmt, config=cfg)
    if not args.quiet:
        print(f"wrote {len(records)} records to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import PlotError, render

    _check_writable(args.out)
    records = read_results(args.in_path)
    if not records:
        raise PlotError(f"{args.in_path} contains no records")
    svg = render(records, args.kind)
    tmp = args.out + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(svg)
    os.replace(tmp, args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    from .acceptance import run_level

    results = run_level(args.level, report=lambda r: print(r.line(), flush=True))
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} checks passed")
    return EXIT_OK if passed == len(results) else EXIT_RUNTIME


COMMANDS = {
    "theory": cmd_theory,
    "phase": cmd_phase,
    "plot": cmd_plot,
    "validate": cmd_validate,
    **{name: cmd_run for name in RUN_KINDS},
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required; see --help")
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (UsageError, ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:  # includes plotting errors on unusable input
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
