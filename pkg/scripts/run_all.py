"""Run every bundled scenario in quadrature and Monte Carlo mode, twice, and
check that the rendered outputs are byte-identical between the two passes."""
from __future__ import annotations

import argparse
import hashlib
import time
from pathlib import Path

from transportlab.artifacts import write_all
from transportlab.config import bundled_scenarios, load_config
from transportlab.runner import run_config

MODES = ("truth_quadrature", "truth_monte_carlo")


def sweep(n: int | None = None) -> tuple[dict, list, float]:
    """Return ({(scenario, mode): {file: sha256}}, failures, seconds)."""
    digests, failures = {}, []
    t0 = time.perf_counter()
    for name, (path, _) in bundled_scenarios().items():
        base = load_config(path)
        for mode in MODES:
            cfg = base.with_overrides(mode=mode, n_per_population=n)
            res = run_config(cfg)
            digests[(name, mode)] = {f: hashlib.sha256(t.encode()).hexdigest() for f, t in res.files.items()}
            failures += [(name, mode, r.check, r.scenario, r.measure) for r in res.failures]
    return digests, failures, time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, help="also write the second pass to this directory")
    ap.add_argument("--n", type=int, help="override Monte Carlo n per population")
    args = ap.parse_args()

    first, fails, t1 = sweep(args.n)
    second, _, t2 = sweep(args.n)
    print(f"pass 1: {len(first)} runs in {t1:.1f} s, pass 2: {t2:.1f} s")
    print(f"failing checks: {len(fails)}")
    for f in fails:
        print("  FAIL", *f)
    print("byte-identical reruns:", first == second)
    if args.out:
        for name, (path, _) in bundled_scenarios().items():
            for mode in MODES:
                cfg = load_config(path).with_overrides(mode=mode, n_per_population=args.n)
                write_all(args.out / mode / name, run_config(cfg).files)


if __name__ == "__main__":
    main()
