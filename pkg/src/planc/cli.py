"""``planc terrain | rollout | eval | export``.

Exit status: 0 on success, 1 when a rollout fails its task (miss, fall,
divergence), 2 on usage, configuration or input-file errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from .config import Config, ConfigError, parse_config
from .evaluate import EvalSettings, run_eval
from .io import TraceFormatError, convert, dumps_csv, dumps_json, trace_table
from .sim import evaluate_success, rollout, rollout_rng
from .terrain import FAMILIES, dump_terrain, generate_terrain, load_terrain, terrain_to_obj

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _seed(arg: int | None, default: int) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("PLANC_SEED")
    if env is not None and env != "":
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"PLANC_SEED must be an integer, got {env!r}") from None
    return default


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror or exc}") from None


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def _apply_flags(cfg: Config, args) -> Config:
    sim = cfg.sim
    if getattr(args, "noise", False):
        sim = dataclasses.replace(sim, noise=True)
    if getattr(args, "disturb", False):
        sim = dataclasses.replace(sim, disturb=True)
    return dataclasses.replace(cfg, sim=sim)


def _settings(args) -> EvalSettings:
    if args.fixed_T is not None and not args.fixed_T > 0:
        raise UsageError("--fixed-T must be positive")
    return EvalSettings(args.fixed_T, args.fixed_udes)


def cmd_terrain(args) -> int:
    cfg = parse_config(args.config)
    kind = args.kind or cfg.terrain.kind
    d = cfg.terrain.difficulty if args.difficulty is None else args.difficulty
    if not 0.0 <= d <= 1.0:
        raise UsageError(f"--difficulty must lie in [0, 1], got {d}")
    seed = _seed(args.seed, cfg.terrain.seed)
    seq = generate_terrain(kind, d, seed, cfg.terrain.n_stones, cfg.terrain.stone_width)
    _write(args.out, dump_terrain(seq))
    if args.obj:
        _write(args.obj, terrain_to_obj(seq))
    gaps = seq.gaps()
    msg = f"{kind} d={d:g} seed={seed}: {len(seq)} stones, gaps {min(gaps):.3f}-{max(gaps):.3f} m"
    print(msg, file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK


def _sequence(cfg: Config, seed: int, terrain_path: str | None):
    path = terrain_path or cfg.terrain.path
    if path:
        try:
            return load_terrain(_read(path))
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"invalid terrain document {path}: {exc}") from None
    t = cfg.terrain
    return generate_terrain(t.kind, t.difficulty, seed, t.n_stones, t.stone_width)


def cmd_rollout(args) -> int:
    cfg = _apply_flags(parse_config(args.config), args)
    seed = _seed(args.seed, cfg.terrain.seed)
    settings = _settings(args)
    seq = _sequence(cfg, seed, args.terrain)
    if len(seq) < 2:
        raise UsageError("terrain needs at least two stones")
    trace = rollout(
        seq, cfg, rollout_rng(seq.kind, seed), fixed_T=settings.fixed_T, fixed_udes=settings.fixed_udes
    )
    table = trace_table(trace)
    if args.out is not None:
        _write(args.out, dumps_json(table) if args.format == "json" else dumps_csv(table))
    rep = evaluate_success(trace, seq)
    where = "" if rep.failed_step is None else f" at step {rep.failed_step}"
    print(f"{rep.outcome}{where}: {rep.steps} steps, {len(trace)} rows, kernel={trace.kernel}")
    return EXIT_OK if rep.success else EXIT_FAIL


def cmd_eval(args) -> int:
    cfg = _apply_flags(parse_config(args.config), args)
    settings = _settings(args)
    if args.seeds is not None:
        if args.seeds < 1:
            raise UsageError("--seeds must be >= 1")
        cfg = dataclasses.replace(cfg, eval=dataclasses.replace(cfg.eval, seeds=args.seeds))
    if args.seed is not None or os.environ.get("PLANC_SEED"):
        offset = _seed(args.seed, cfg.eval.seed_offset)
        cfg = dataclasses.replace(cfg, eval=dataclasses.replace(cfg.eval, seed_offset=offset))
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    table = run_eval(cfg, jobs=args.jobs, settings=settings)
    text = table.to_text()
    sys.stdout.write(text)
    if args.out is not None:
        _write(args.out, table.to_json())
        if args.out != "-":
            _write(str(Path(args.out).with_suffix(".txt")), text)
    return EXIT_OK


def cmd_export(args) -> int:
    text = _read(args.trace)
    try:
        out = convert(text, args.format)
    except TraceFormatError as exc:
        raise UsageError(f"{args.trace}: {exc}") from None
    _write(args.out, out)
    return EXIT_OK


def _number(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planc", description="Stepping-stone planner and rollout harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, ablation=False):
        p.add_argument("--config", help="YAML configuration (defaults when omitted)")
        p.add_argument("--seed", type=int, help="seed; falls back to $PLANC_SEED, then the config")
        p.add_argument("--out", help="output path ('-' or omitted: stdout)")
        if ablation:
            p.add_argument("--fixed-T", dest="fixed_T", type=_number, help="fixed step duration (s)")
            p.add_argument("--fixed-udes", dest="fixed_udes", type=_number, help="fixed pre-impact vertical velocity")
            p.add_argument("--noise", action="store_true", help="enable landing and impact-velocity noise")
            p.add_argument("--disturb", action="store_true", help="enable random velocity kicks")

    p = sub.add_parser("terrain", help="generate a terrain document")
    common(p)
    p.add_argument("--kind", choices=FAMILIES)
    p.add_argument("--difficulty", type=float)
    p.add_argument("--obj", help="also write a Wavefront OBJ mesh here")
    p.set_defaults(func=cmd_terrain)

    p = sub.add_parser("rollout", help="run one rollout and write its trace")
    common(p, ablation=True)
    p.add_argument("--terrain", help="terrain document to use instead of generating one")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("eval", help="batch success-rate table")
    common(p, ablation=True)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--seeds", type=int, help="seeds per cell (overrides eval.seeds)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="convert a trace between csv and json")
    p.add_argument("trace")
    p.add_argument("--format", choices=("csv", "json"), required=True)
    p.add_argument("--out", help="output path ('-' or omitted: stdout)")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"planc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
