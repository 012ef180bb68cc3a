"""Acceptance criteria, one test each, every test printing a single PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` (lines appear even under output
capture) or ``python3 tests/test_acceptance.py`` for the bare summary.
"""
from __future__ import annotations

import hashlib
import math
import statistics
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402
from transportlab.config import bundled_scenarios, load_config  # noqa: E402
from transportlab.estimands import effect_curve, rmst_closed_form, rmst_simpson  # noqa: E402
from transportlab.estimands import conditional_effect, marginal_effect  # noqa: E402
from transportlab.fitting import (  # noqa: E402
    design_matrix,
    fit_model,
    glm_loglik,
    glm_score,
    weibull_loglik,
    weibull_score,
)
from transportlab.model import EffectMeasure, Link, Treatment  # noqa: E402
from transportlab.population import PopulationSpec, default_grid, rng_for, sample_covariates  # noqa: E402
from transportlab.propositions import check_b2_counterexample, flatness_concordance, verdict_for  # noqa: E402
from transportlab.runner import run_config  # noqa: E402
from transportlab.studies import (  # noqa: E402
    linear_model,
    log_binomial_model,
    logistic_model,
    weibull_model,
)
from transportlab.transport import TransportSetup, simulate_trial, solve_maic, step_one, two_step_pipeline  # noqa: E402

A, B, C = Treatment.A, Treatment.B, Treatment.C
GRID = default_grid()
INDEX = PopulationSpec.tilted(0.0, 2.0, target_mean=0.3, label="index")
TAU = 2.0
N = 100_000


def report(number: int, ok: bool, detail: str, capsys=None) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)


def _timed(fn, repeat=1):
    best, out = math.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


# --- 1 ------------------------------------------------------------------

def criterion_1():
    check_b2_counterexample()  # warm caches
    times = []
    for _ in range(50):
        t0 = time.perf_counter()
        r = check_b2_counterexample()
        times.append(time.perf_counter() - t0)
    cond, marg = r.values["conditional_log_rr"], r.values["marginal_log_rr"]
    e1, e2 = abs(cond - 0.5 * math.log(2)), abs(marg - math.log(1.1))
    t = statistics.median(times)
    ok = e1 <= 1e-12 and e2 <= 1e-12 and t < 1e-3
    return ok, f"cond {cond:.10f} (err {e1:.1e}), marg {marg:.10f} (err {e2:.1e}), median {t * 1e3:.3f} ms"


# --- 2 ------------------------------------------------------------------

def criterion_2():
    msr = [EffectMeasure("mean_difference", e) for e in ("conditional", "marginal")]
    model = linear_model(True)

    def go():
        quad = [two_step_pipeline(TransportSetup(model, GRID, INDEX), m) for m in msr]
        mc = [two_step_pipeline(TransportSetup(model, GRID, INDEX, "stc", "truth_monte_carlo", N, 2), m)
              for m in msr]
        return quad, mc

    (quad, mc), secs = _timed(go)
    qmax = max(abs(r.bias) for rows in quad for r in rows)
    zmax = max(abs(r.bias) / r.se for rows in mc for r in rows)
    n_rows = sum(len(rows) for rows in quad)
    ok = n_rows == 42 and qmax <= 1e-8 and zmax <= 4 and secs < 5
    return ok, f"quadrature max|bias| {qmax:.1e}, MC max|bias|/SE {zmax:.2f}, {secs:.2f} s"


# --- 3 ------------------------------------------------------------------

def criterion_3():
    model = linear_model(False)
    worst = 0.0
    for est in ("conditional", "marginal"):
        for r in two_step_pipeline(TransportSetup(model, GRID, INDEX), EffectMeasure("mean_difference", est)):
            worst = max(worst, abs(r.bias - (-6 * r.target.mu_x)))
    return worst <= 1e-10, f"max |bias + 6 mu| {worst:.1e}"


# --- 4 ------------------------------------------------------------------

def criterion_4():
    model = logistic_model(True)
    cond = [v.value for v in effect_curve(model, EffectMeasure("log_odds_ratio", "conditional"), GRID, B, C)]
    cdev = max(abs(v - 1.0) for v in cond)
    marg = effect_curve(model, EffectMeasure("log_odds_ratio", "marginal"), GRID, B, C)
    vals = [v.value for v in marg]
    spread = max(vals) - min(vals)
    odev = max(abs(v.value - oracles.marginal_log_odds_ratio(model, B, C, v.mu_x)) for v in marg)
    ok = cdev <= 1e-12 and spread > 1e-3 and odev <= 1e-10
    return ok, f"conditional |dev from 1| {cdev:.1e}; marginal spread {spread:.4f}, oracle dev {odev:.1e}"


# --- 5 ------------------------------------------------------------------

def criterion_5():
    model = log_binomial_model(True)
    msr = EffectMeasure("log_risk_ratio", "marginal")
    bc = [v.value for v in effect_curve(model, msr, GRID, B, C)]
    ba = [v.value for v in effect_curve(model, msr, GRID, B, A)]
    dev = max(abs(v - math.log(14 / 11)) for v in bc)
    spread = max(ba) - min(ba)
    return dev <= 1e-8 and spread > 1e-3, f"B-C dev from log(14/11) {dev:.1e}; B-A spread {spread:.4f}"


# --- 6 ------------------------------------------------------------------

def criterion_6():
    model = weibull_model(True)
    gap = 0.0
    for pop in GRID:
        mv = marginal_effect(model, EffectMeasure("rmst_difference", "marginal", TAU), pop, B, C).value
        cv = conditional_effect(model, EffectMeasure("rmst_difference", "conditional", TAU), pop, B, C).value
        gap = max(gap, abs(mv - cv))
    curve = [v.value for v in effect_curve(model, EffectMeasure("rmst_difference", "marginal", TAU), GRID, B, C)]
    spread = max(curve) - min(curve)
    rng = rng_for(2026)
    agree = 0.0
    for _ in range(100):
        lam, nu, tau = rng.uniform(0.05, 5.0), rng.uniform(0.5, 3.0), rng.uniform(0.1, 5.0)
        agree = max(agree, abs(rmst_simpson(lam, nu, tau) - rmst_closed_form(lam, nu, tau)))
    ok = gap <= 1e-8 and spread > 1e-3 and agree <= 1e-8
    return ok, (f"tau {TAU}: marginal vs avg-conditional gap {gap:.1e}, SEMA spread {spread:.4f}, "
                f"Simpson vs closed form max {agree:.1e} over 100 triples")


# --- 7 ------------------------------------------------------------------

def criterion_7():
    scenarios = {
        "mean difference": (linear_model(True), [EffectMeasure("mean_difference", "marginal")]),
        "log odds ratio": (logistic_model(True), [EffectMeasure("log_odds_ratio", "marginal")]),
        "RMST": (weibull_model(True), [EffectMeasure("rmst_difference", "marginal", TAU),
                                       EffectMeasure("log_rmst_ratio", "marginal", TAU)]),
    }
    zmax = 0.0
    for model, measures in scenarios.values():
        for m in measures:
            maic = step_one(TransportSetup(model, GRID, INDEX, "maic", "truth_monte_carlo", N, 71), m)
            stc = step_one(TransportSetup(model, GRID, INDEX, "stc", "truth_monte_carlo", N, 72), m)
            zmax = max(zmax, abs(maic.value - stc.value) / math.hypot(maic.se, stc.se))
    x = sample_covariates(INDEX, N, 73)
    mean = float(x.mean())
    resid, ess = 0.0, {}
    for pop in GRID:
        sol = solve_maic(x, pop.mu_x)
        resid = max(resid, abs(np.dot(sol.weights, x) / sol.weights.sum() - pop.mu_x))
        ess[abs(pop.mu_x - mean)] = (pop.mu_x > mean, sol.ess)
    monotone = True
    for side in (True, False):
        seq = [e for d, (s, e) in sorted(ess.items()) if s == side]
        monotone &= all(a > b for a, b in zip(seq, seq[1:]))
    ok = zmax <= 4 and resid <= 1e-10 and monotone
    return ok, (f"max |MAIC - STC| / combined SE {zmax:.2f}, weighted-mean residual {resid:.1e}, "
                f"ESS monotone {monotone}")


# --- 8 ------------------------------------------------------------------

def criterion_8():
    cfg = load_config(bundled_scenarios()["table1_classification"][0])
    combos, disagree = set(), []
    for variant, m in cfg.pairs():
        v = verdict_for(variant.model, m)
        r = flatness_concordance(variant.model, m, cfg.grid)
        combos.add((m.kind.value, m.estimand.value, v.sema, variant.model.link.value))
        if r.status == "FAIL":
            disagree.append((variant.label, m.label))
    return not disagree, f"{len(combos)} (measure, estimand, SEMA, link) combinations, {len(disagree)} disagreements"


# --- 9 ------------------------------------------------------------------

def _truth(model, names):
    out = []
    for n in names:
        if n in ("beta0", "beta1"):
            out.append(getattr(model, n))
        elif n == "log_shape":
            out.append(math.log(model.shape))
        else:
            kind, arm = n.rsplit("_", 1)
            out.append(getattr(model, kind)[Treatment(arm)])
    return np.array(out)


def criterion_9():
    pop = PopulationSpec.uniform(0.0)
    arms = (A, B, C)
    rng = rng_for(909)
    grad_err = 0.0
    for link, maker in ((Link.LOGIT, logistic_model), (Link.LOG, log_binomial_model)):
        d = simulate_trial(maker(False), pop, arms, 2000, 1)
        X, _ = design_matrix(d.x, d.treatment)
        for _ in range(10):
            beta = rng.normal(0, 0.3, X.shape[1])
            if link is Link.LOG:
                beta[0] = -3.0
            g = glm_score(beta, X, d.y, link)
            fd = oracles.central_difference(lambda b: glm_loglik(b, X, d.y, link), beta)
            grad_err = max(grad_err, np.max(np.abs(g - fd)) / np.max(np.abs(g)))
    d = simulate_trial(weibull_model(False), pop, arms, 2000, 2)
    X, _ = design_matrix(d.x, d.treatment)
    for _ in range(10):
        th = np.append(rng.normal(0, 0.3, X.shape[1]), rng.normal(math.log(1.5), 0.2))
        g = weibull_score(th, X, d.time, d.event)
        fd = oracles.central_difference(lambda t: weibull_loglik(t, X, d.time, d.event), th)
        grad_err = max(grad_err, np.max(np.abs(g - fd)) / np.max(np.abs(g)))

    zmax = 0.0
    for link, maker in (("identity", linear_model), ("logit", logistic_model), ("log", log_binomial_model),
                        ("log_hazard_weibull", weibull_model)):
        model = maker(True)
        fit = fit_model(simulate_trial(model, pop, arms, N, 5), link)
        z = (fit.coef - _truth(model, fit.names)) / np.sqrt(np.diag(fit.covariance))
        zmax = max(zmax, float(np.max(np.abs(z))))

    ns = (1_000, 10_000, 100_000)
    slopes = []
    for link, maker in (("identity", linear_model), ("logit", logistic_model)):
        model = maker(True)
        rms = []
        for n in ns:
            errs = [np.sum((fit.coef - _truth(model, fit.names)) ** 2)
                    for fit in (fit_model(simulate_trial(model, pop, arms, n, 7_000 * n + r), link)
                                for r in range(50))]
            rms.append(math.sqrt(np.mean(errs)))
        slopes.append(float(np.polyfit(np.log(ns), np.log(rms), 1)[0]))
    ok = grad_err < 1e-6 and zmax < 3 and all(-0.6 <= s <= -0.4 for s in slopes)
    return ok, (f"max gradient rel err {grad_err:.1e}, max |z| at n=1e5 {zmax:.2f}, "
                f"decay slopes {', '.join(f'{s:.3f}' for s in slopes)}")


# --- 10 -----------------------------------------------------------------

def _sweep():
    digests = {}
    t0 = time.perf_counter()
    for name, (path, _) in bundled_scenarios().items():
        base = load_config(path)
        for mode in ("truth_quadrature", "truth_monte_carlo"):
            res = run_config(base.with_overrides(mode=mode, n_per_population=N))
            digests[(name, mode)] = {f: hashlib.sha256(t.encode()).hexdigest() for f, t in res.files.items()}
    return digests, time.perf_counter() - t0


def criterion_10():
    first, t1 = _sweep()
    second, t2 = _sweep()
    same = first == second
    ok = same and max(t1, t2) < 60
    return ok, f"{len(first)} scenario runs, sweep {t1:.1f} s / rerun {t2:.1f} s, byte-identical {same}"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("number", range(1, 11))
def test_criterion(number, capsys):
    ok, detail = CRITERIA[number - 1]()
    report(number, ok, detail, capsys)
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for i, fn in enumerate(CRITERIA, 1):
        ok, detail = fn()
        report(i, ok, detail)
        failed += not ok
    sys.exit(1 if failed else 0)
