"""Population-average conditional and marginal effects, RMST machinery."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .model import (
    ConfigurationError,
    EffectMeasure,
    EstimandKind,
    Link,
    OutcomeModel,
    Treatment,
    check_compatible,
    conditional_mean,
    h_transform,
    pointwise_contrast,
    scale_aligned,
)
from .population import (
    DEFAULT_NODES,
    PopulationGrid,
    PopulationSpec,
    derive_seed,
    expectation_over_x,
    rng_for,
    sample_covariates,
)

QUADRATURE = "quadrature"
MONTE_CARLO = "monte_carlo"

ARM_STREAM = {Treatment.A: 1, Treatment.B: 2, Treatment.C: 3}


class ConsistencyError(ArithmeticError):
    """Two independent numerical routes to the same quantity disagree."""


@dataclass(frozen=True)
class EstimandValue:
    value: float
    measure: EffectMeasure
    population: str
    pair: tuple
    method: str = QUADRATURE
    n: int | None = None
    seed: int | None = None
    se: float | None = None
    mu_x: float | None = None


# ---------------------------------------------------------------------------
# RMST


def rmst_closed_form(lam, shape: float, tau: float):
    """int_0^tau exp(-lam u^shape) du via the regularised lower incomplete gamma."""
    lam = np.asarray(lam, dtype=float)
    a = 1.0 / shape
    out = lam ** (-a) * special.gamma(1.0 + a) * special.gammainc(a, lam * tau ** shape)
    return out if out.ndim else float(out)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-10, max_depth: int = 60) -> float:
    """Adaptive Simpson quadrature with Richardson correction (absolute tolerance)."""
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a0, b0, fa0, fm0, fb0, s, eps, depth = stack.pop()
        m = 0.5 * (a0 + b0)
        lm, rm = 0.5 * (a0 + m), 0.5 * (m + b0)
        flm, frm = f(lm), f(rm)
        left = (m - a0) / 6.0 * (fa0 + 4.0 * flm + fm0)
        right = (b0 - m) / 6.0 * (fm0 + 4.0 * frm + fb0)
        delta = left + right - s
        if depth >= max_depth or abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
        else:
            stack.append((a0, m, fa0, flm, fm0, left, eps / 2.0, depth + 1))
            stack.append((m, b0, fm0, frm, fb0, right, eps / 2.0, depth + 1))
    return total


def rmst_simpson(lam: float, shape: float, tau: float, tol: float = 1e-10) -> float:
    return adaptive_simpson(lambda u: math.exp(-lam * u ** shape), 0.0, tau, tol)


def rmst(model: OutcomeModel, t: Treatment, x: float, tau: float, agree_tol: float = 1e-8) -> float:
    """Restricted mean survival time of arm ``t`` at covariate ``x``.

    Adaptive Simpson (abs. tol 1e-10) checked against the incomplete-gamma
    closed form; raises ``ConsistencyError`` if they differ by more than
    ``agree_tol``.
    """
    if model.link is not Link.LOG_HAZARD_WEIBULL:
        raise ConfigurationError("rmst needs a log_hazard_weibull model")
    if not tau > 0:
        raise ConfigurationError(f"tau must be > 0, got {tau}")
    lam = math.exp(model.eta(t, x))
    quad = rmst_simpson(lam, model.shape, tau)
    closed = rmst_closed_form(lam, model.shape, tau)
    if abs(quad - closed) > agree_tol:
        raise ConsistencyError(f"RMST routes disagree: simpson={quad!r} closed={closed!r}")
    return quad


# ---------------------------------------------------------------------------
# simulation


def simulate_outcomes(model: OutcomeModel, t: Treatment, x: np.ndarray, seed: int,
                      censor_time: float | None = None):
    """Draw outcomes of arm ``t`` for covariates ``x``.

    Returns ``y`` for identity/logit/log models and ``(time, event)`` for
    Weibull models (inverse transform, optional administrative censoring).
    """
    rng = rng_for(seed)
    eta = model.eta(t, x)
    if model.link is Link.IDENTITY:
        return eta + model.sigma * rng.standard_normal(len(x))
    if model.link in (Link.LOGIT, Link.LOG):
        p = conditional_mean(model, t, x)
        if model.link is Link.LOG and np.any(p >= 1):
            raise FloatingPointError("log-link risk >= 1; model misconfigured for this population")
        return (rng.random(len(x)) < p).astype(float)
    u = rng.random(len(x))
    # 1 - u lies in (0, 1], avoids log(0)
    time = (-np.log1p(-u) / np.exp(eta)) ** (1.0 / model.shape)
    event = np.ones(len(x))
    if censor_time is not None:
        event = (time <= censor_time).astype(float)
        time = np.minimum(time, censor_time)
    return time, event


def potential_outcomes(model: OutcomeModel, x: np.ndarray, arms, seed: int, tau: float | None = None):
    """Per-arm outcome draws on a shared covariate sample (restricted times for Weibull)."""
    out = {}
    for t in arms:
        t = Treatment(t)
        draw = simulate_outcomes(model, t, x, derive_seed(seed, ARM_STREAM[t]))
        if model.link is Link.LOG_HAZARD_WEIBULL:
            draw = np.minimum(draw[0], tau)
        out[t] = draw
    return out


def _h_slope(h: str, m: float) -> float:
    if h == "identity":
        return 1.0
    if h == "log":
        return 1.0 / m
    return 1.0 / (m * (1.0 - m))


# ---------------------------------------------------------------------------
# estimands


def _validate(model, measure, t, s, estimand):
    t, s = Treatment(t), Treatment(s)
    if t is s:
        raise ConfigurationError(f"contrast of {t.value} with itself is undefined")
    if measure.estimand is not estimand:
        raise ConfigurationError(f"expected a {estimand.value} measure, got {measure.estimand.value}")
    check_compatible(measure.kind, model.link)
    return t, s


def conditional_effect(model: OutcomeModel, measure: EffectMeasure, pop: PopulationSpec,
                       t: Treatment, s: Treatment, method: str = QUADRATURE,
                       n: int | None = None, seed: int | None = None,
                       n_nodes: int = DEFAULT_NODES) -> EstimandValue:
    """Population-average conditional contrast E_X[h(mu_t(X)) - h(mu_s(X))]."""
    t, s = _validate(model, measure, t, s, EstimandKind.CONDITIONAL)
    common = dict(measure=measure, population=pop.label, pair=(t, s), mu_x=pop.mu_x)
    if method == MONTE_CARLO:
        x = sample_covariates(pop, n, derive_seed(seed, 0))
        c = pointwise_contrast(model, measure, t, s, x)
        se = float(np.std(c, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
        return EstimandValue(float(np.mean(c)), method=MONTE_CARLO, n=n, seed=seed, se=se, **common)

    value = expectation_over_x(pop, lambda x: pointwise_contrast(model, measure, t, s, x), n_nodes)
    if scale_aligned(measure.kind, model.link):
        at_mean = model.eta(t, pop.mu_x) - model.eta(s, pop.mu_x)
        if abs(at_mean - value) > 1e-10:
            raise ConsistencyError(
                f"averaged contrast {value!r} != contrast at mean covariate {at_mean!r}")
    return EstimandValue(value, **common)


def mean_potential_outcome(model: OutcomeModel, pop: PopulationSpec, t: Treatment,
                           tau: float | None = None, n_nodes: int = DEFAULT_NODES) -> float:
    """E_X[g^-1(eta_t(X))] (E_X[RMST_t(X)] for Weibull models) by quadrature."""
    return expectation_over_x(pop, lambda x: conditional_mean(model, t, x, tau), n_nodes)


def marginal_effect(model: OutcomeModel, measure: EffectMeasure, pop: PopulationSpec,
                    t: Treatment, s: Treatment, method: str = QUADRATURE,
                    n: int | None = None, seed: int | None = None,
                    n_nodes: int = DEFAULT_NODES) -> EstimandValue:
    """Contrast of population-averaged potential outcomes h(E[Y^t]) - h(E[Y^s])."""
    t, s = _validate(model, measure, t, s, EstimandKind.MARGINAL)
    common = dict(measure=measure, population=pop.label, pair=(t, s), mu_x=pop.mu_x)
    if method == MONTE_CARLO:
        x = sample_covariates(pop, n, derive_seed(seed, 0))
        po = potential_outcomes(model, x, (t, s), seed, measure.tau)
        yt, ys = po[t], po[s]
        mt, ms = float(np.mean(yt)), float(np.mean(ys))
        value = float(h_transform(measure.h, mt) - h_transform(measure.h, ms))
        dt, ds = _h_slope(measure.h, mt), _h_slope(measure.h, ms)
        cov = np.cov(np.vstack([yt, ys]))
        var = (dt * dt * cov[0, 0] + ds * ds * cov[1, 1] - 2 * dt * ds * cov[0, 1]) / n
        return EstimandValue(value, method=MONTE_CARLO, n=n, seed=seed,
                             se=math.sqrt(max(var, 0.0)), **common)

    mt = mean_potential_outcome(model, pop, t, measure.tau, n_nodes)
    ms = mean_potential_outcome(model, pop, s, measure.tau, n_nodes)
    value = float(h_transform(measure.h, mt) - h_transform(measure.h, ms))
    return EstimandValue(value, **common)


def effect(model, measure, pop, t, s, **kw) -> EstimandValue:
    if measure.estimand is EstimandKind.CONDITIONAL:
        return conditional_effect(model, measure, pop, t, s, **kw)
    return marginal_effect(model, measure, pop, t, s, **kw)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("TRANSPORTLAB_THREADS", "1")))
    except ValueError:
        return 1


def ordered_map(fn: Callable, items: Sequence) -> list:
    """Map preserving input order; threaded when TRANSPORTLAB_THREADS > 1."""
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def effect_curve(model: OutcomeModel, measure: EffectMeasure, grid: PopulationGrid,
                 t: Treatment, s: Treatment, method: str = QUADRATURE,
                 n: int | None = None, base_seed: int | None = None,
                 n_nodes: int = DEFAULT_NODES) -> list[EstimandValue]:
    """One estimand per grid population, in grid order.

    Monte Carlo populations use ``derive_seed(base_seed, i)`` for grid index i.
    """
    def one(i):
        kw = {"method": method, "n_nodes": n_nodes}
        if method == MONTE_CARLO:
            kw.update(n=n, seed=derive_seed(base_seed, i))
        return effect(model, measure, grid.populations[i], t, s, **kw)

    return ordered_map(one, range(len(grid)))
