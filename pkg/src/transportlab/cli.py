"""Command-line entry point: ``run``, ``list`` and ``validate`` scenario verbs.

Exit codes: 0 when every non-expected-fail check passes, 1 on a failing
check or numeric error, 2 on configuration problems (nothing is written).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .artifacts import write_all
from .config import MECHANISMS, MODES, ConfigError, bundled_scenarios, lint, load_config, resolve
from .model import ConfigurationError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _load(target: str):
    path = resolve(target)
    try:
        return load_config(path), None
    except OSError as exc:
        return None, [f"<path>: cannot read {path}: {exc.strerror or exc}"]
    except ConfigError as exc:
        return None, exc.problems


def _report_problems(problems) -> int:
    for p in problems:
        print(f"config error: {p}", file=sys.stderr)
    return EXIT_CONFIG


def cmd_list(args) -> int:
    reg = bundled_scenarios()
    width = max(len(n) for n in reg)
    for name, (_, desc) in reg.items():
        print(f"{name.ljust(width)}  {desc}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg, problems = _load(args.config)
    if problems:
        return _report_problems(problems)
    for w in lint(cfg):
        print(f"warning: {w}")
    print(f"OK {cfg.name}")
    return EXIT_OK


def cmd_run(args) -> int:
    from .runner import run_config

    cfg, problems = _load(args.config)
    if problems:
        return _report_problems(problems)
    try:
        cfg = cfg.with_overrides(mode=args.mode, mechanism=args.mechanism, outputs=args.out,
                                 n_per_population=args.n, base_seed=args.seed)
    except ConfigurationError as exc:
        return _report_problems([str(exc)])
    for w in lint(cfg):
        print(f"warning: {w}", file=sys.stderr)
    try:
        result = run_config(cfg)
    except ConfigurationError as exc:
        return _report_problems([f"<semantic>: {exc}"])
    except OSError as exc:
        return _report_problems([f"index_data: cannot read {exc.filename}: {exc.strerror}"])
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"numeric failure in {cfg.name}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    outdir = Path(cfg.outputs)
    write_all(outdir, result.files)
    if not args.quiet:
        print(f"{cfg.name}: wrote {len(result.files)} files to {outdir}")
    for r in result.failures:
        print(f"FAIL {r.check} [{r.scenario} {r.measure}]: {r.message}", file=sys.stderr)
    return EXIT_FAIL if result.failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="transportlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run a scenario (bundled name or JSON path)")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: the config's outputs field)")
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--mechanism", choices=MECHANISMS)
    r.add_argument("--n", type=int, help="Monte Carlo sample size per population")
    r.add_argument("--seed", type=int, help="base seed")
    r.add_argument("-q", "--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    sub.add_parser("list", help="list bundled scenarios").set_defaults(func=cmd_list)

    v = sub.add_parser("validate", help="check a scenario against the schema without running it")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
