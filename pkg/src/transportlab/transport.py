"""Weighting and g-computation transport, anchored contrasts, two-step pipeline."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .estimands import (
    MONTE_CARLO,
    QUADRATURE,
    EstimandValue,
    _h_slope,
    conditional_effect,
    effect,
    marginal_effect,
    mean_potential_outcome,
    ordered_map,
    simulate_outcomes,
)
from .model import (
    ConfigurationError,
    EffectMeasure,
    EstimandKind,
    Link,
    OutcomeModel,
    Treatment,
    conditional_mean,
    h_transform,
    pointwise_contrast,
)
from .population import PopulationGrid, PopulationSpec, derive_seed, rng_for, sample_covariates

INDEX_STREAM = 10_000
GCOMP_STREAM = 10_001


class NonOverlapError(ValueError):
    """Target covariate mean lies outside the convex hull of the source sample."""


class SolverError(RuntimeError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


@dataclass(frozen=True)
class TransportEstimate:
    value: float
    measure: EffectMeasure
    pair: tuple
    source: str
    target: str
    mechanism: str  # direct | gcomp | weighting
    se: float | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MaicWeights:
    weights: np.ndarray
    alpha: float
    iterations: int
    residual: float

    @property
    def ess(self) -> float:
        return effective_sample_size(self.weights)


def effective_sample_size(w) -> float:
    w = np.asarray(w, dtype=float)
    return float(w.sum() ** 2 / np.dot(w, w))


def solve_maic(source_x: Sequence[float], target_mean: float, tol: float = 1e-12,
               max_iter: int = 100) -> MaicWeights:
    """Method-of-moments weights ``exp(alpha * (x - target_mean))``.

    Newton on the convex dual; weights are normalised to mean 1 and the
    weighted mean of ``x`` matches ``target_mean`` to ``tol``.
    """
    x = np.asarray(source_x, dtype=float)
    if not (x.min() < target_mean < x.max()):
        raise NonOverlapError(
            f"target mean {target_mean} outside source range [{x.min()}, {x.max()}]; no weights exist")
    z = x - target_mean
    alpha = 0.0
    for it in range(1, max_iter + 1):
        a = alpha * z
        w = np.exp(a - a.max())
        sw = w.sum()
        grad = np.dot(w, z) / sw  # weighted mean of z
        if abs(grad) <= tol:
            w = w / w.mean()
            return MaicWeights(w, alpha, it - 1, grad)
        hess = np.dot(w, z * z) / sw - grad * grad  # weighted variance of z
        alpha -= grad / hess
    raise SolverError(f"MAIC Newton did not converge in {max_iter} iterations "
                      f"(residual {grad:.3e})", residual=grad)


def maic_weights(source_x: Sequence[float], target_mean: float) -> np.ndarray:
    return solve_maic(source_x, target_mean).weights


def weighted_marginal_outcome(y, t_labels, weights, t: Treatment) -> float:
    """Self-normalised (Hajek) weighted mean outcome in arm ``t``."""
    t = Treatment(t)
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    labels = np.array([getattr(lab, "value", lab) for lab in t_labels])
    mask = (labels == t.value) & (w > 0)
    if not mask.any():
        raise ValueError(f"no observations with positive weight in arm {t.value}")
    return float(np.dot(w[mask], y[mask]) / w[mask].sum())


def _hajek_var(y, w) -> float:
    sw = w.sum()
    mu = np.dot(w, y) / sw
    return float(np.dot(w * w, (y - mu) ** 2) / sw ** 2)


def gcomp_transport(model: OutcomeModel, target: PopulationSpec, t: Treatment,
                    mode: str = QUADRATURE, n: int | None = None, seed: int | None = None,
                    tau: float | None = None) -> float:
    """Transported mean potential outcome E_{X~target}[g^-1(eta_t(X))]."""
    t = Treatment(t)
    if mode == QUADRATURE:
        return mean_potential_outcome(model, target, t, tau)
    x = sample_covariates(target, n, seed)
    return float(np.mean(conditional_mean(model, t, x, tau)))


def gcomp_contrast(model: OutcomeModel, measure: EffectMeasure, target: PopulationSpec,
                   t: Treatment, s: Treatment, mode: str = QUADRATURE,
                   n: int | None = None, seed: int | None = None) -> tuple[float, float]:
    """g-computation contrast in ``target`` with its covariate-sampling SE (0 for quadrature)."""
    if mode == QUADRATURE:
        return effect(model, measure, target, t, s).value, 0.0
    x = sample_covariates(target, n, seed)
    if measure.estimand is EstimandKind.CONDITIONAL:
        c = pointwise_contrast(model, measure, t, s, x)
        return float(np.mean(c)), float(np.std(c, ddof=1) / math.sqrt(n))
    pt = conditional_mean(model, t, x, measure.tau)
    ps = conditional_mean(model, s, x, measure.tau)
    mt, ms = float(np.mean(pt)), float(np.mean(ps))
    dt, ds = _h_slope(measure.h, mt), _h_slope(measure.h, ms)
    cov = np.cov(np.vstack([pt, ps]))
    var = (dt * dt * cov[0, 0] + ds * ds * cov[1, 1] - 2 * dt * ds * cov[0, 1]) / n
    return float(h_transform(measure.h, mt) - h_transform(measure.h, ms)), math.sqrt(max(var, 0.0))


def anchored_indirect(delta_BA: float, delta_CA: float) -> float:
    """Anchored active-active contrast on an additive h-scale."""
    return delta_BA - delta_CA


# ---------------------------------------------------------------------------
# index-trial data


@dataclass(frozen=True)
class TrialData:
    """Patient-level records: covariate, treatment label and outcome columns."""

    x: np.ndarray
    treatment: np.ndarray  # array of "A" / "B" / "C"
    y: np.ndarray | None = None
    time: np.ndarray | None = None
    event: np.ndarray | None = None

    def __len__(self):
        return len(self.x)

    def restricted_time(self, tau: float) -> np.ndarray:
        if np.any((self.event == 0) & (self.time < tau)):
            raise ConfigurationError("restricted mean from data needs no censoring before tau")
        return np.minimum(self.time, tau)

    def to_csv(self) -> str:
        """Patient-level CSV: ``x,treatment,y`` or ``x,treatment,time,event``."""
        cols = ["x", "treatment"] + (["y"] if self.y is not None else ["time", "event"])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for i in range(len(self)):
            row = [format(float(self.x[i]), ".17g"), self.treatment[i]]
            if self.y is not None:
                row.append(format(float(self.y[i]), ".17g"))
            else:
                row += [format(float(self.time[i]), ".17g"), str(int(self.event[i]))]
            w.writerow(row)
        return buf.getvalue()


def read_trial_csv(source) -> TrialData:
    """Parse the patient-level CSV format (path or text); ``#`` lines are comments."""
    text = source if isinstance(source, str) and "\n" in source else open(source).read()
    rows = list(csv.DictReader(line for line in text.splitlines() if not line.startswith("#")))
    if not rows:
        raise ConfigurationError("patient-level CSV has no records")
    cols = set(rows[0])
    if not {"x", "treatment"} <= cols:
        raise ConfigurationError("patient-level CSV needs columns x and treatment")
    x = np.array([float(r["x"]) for r in rows])
    labels = np.array([Treatment(r["treatment"].strip()).value for r in rows])
    if "y" in cols:
        return TrialData(x, labels, y=np.array([float(r["y"]) for r in rows]))
    if {"time", "event"} <= cols:
        return TrialData(x, labels, time=np.array([float(r["time"]) for r in rows]),
                         event=np.array([float(r["event"]) for r in rows]))
    raise ConfigurationError("patient-level CSV needs y, or time and event")


def simulate_trial(model: OutcomeModel, pop: PopulationSpec, arms: Sequence[Treatment],
                   n: int, seed: int, censor_time: float | None = None) -> TrialData:
    """Randomised trial in ``pop`` with equal allocation across ``arms``."""
    arms = [Treatment(a) for a in arms]
    x = sample_covariates(pop, n, derive_seed(seed, 0))
    assign = rng_for(derive_seed(seed, 1)).integers(0, len(arms), size=n)
    labels = np.array([a.value for a in arms])[assign]
    y = np.empty(n)
    time = np.empty(n)
    event = np.empty(n)
    for k, arm in enumerate(arms):
        idx = assign == k
        draw = simulate_outcomes(model, arm, x[idx], derive_seed(seed, 2 + k), censor_time)
        if model.link is Link.LOG_HAZARD_WEIBULL:
            time[idx], event[idx] = draw
        else:
            y[idx] = draw
    if model.link is Link.LOG_HAZARD_WEIBULL:
        return TrialData(x, labels, time=time, event=event)
    return TrialData(x, labels, y=y)


def maic_contrast(data: TrialData, measure: EffectMeasure, target_mean: float,
                  t: Treatment = Treatment.B, s: Treatment = Treatment.A):
    """Weighted marginal contrast of ``t`` vs ``s`` transported to ``target_mean``.

    Returns ``(value, se, MaicWeights)``; the SE treats weights as fixed.
    """
    if measure.estimand is not EstimandKind.MARGINAL:
        raise ConfigurationError("weighting transports marginal estimands only")
    sol = solve_maic(data.x, target_mean)
    y = data.restricted_time(measure.tau) if measure.is_rmst else data.y
    means, slopes, var = {}, {}, 0.0
    for arm in (Treatment(t), Treatment(s)):
        mask = data.treatment == arm.value
        means[arm] = weighted_marginal_outcome(y[mask], data.treatment[mask], sol.weights[mask], arm)
        slopes[arm] = _h_slope(measure.h, means[arm])
        var += slopes[arm] ** 2 * _hajek_var(y[mask], sol.weights[mask])
    t, s = Treatment(t), Treatment(s)
    value = float(h_transform(measure.h, means[t]) - h_transform(measure.h, means[s]))
    return value, math.sqrt(var), sol


# ---------------------------------------------------------------------------
# two-step pipeline


@dataclass(frozen=True)
class TransportSetup:
    """Everything the two-step pipeline needs for one model variant.

    ``mechanism`` is ``"maic"`` (weighting) or ``"stc"`` (g-computation);
    ``mode`` is ``"truth_quadrature"``, ``"truth_monte_carlo"`` or
    ``"estimated_model"``.
    """

    model: OutcomeModel
    grid: PopulationGrid
    index_population: PopulationSpec
    mechanism: str = "stc"
    mode: str = "truth_quadrature"
    n: int = 100_000
    base_seed: int = 0
    label: str = ""
    index_data: TrialData | None = None  # observed index trial for estimated_model mode

    @property
    def comparator(self) -> PopulationSpec:
        return self.grid.comparator

    @property
    def monte_carlo(self) -> bool:
        return self.mode != "truth_quadrature"


@dataclass(frozen=True)
class BiasRow:
    target: PopulationSpec
    transported: TransportEstimate
    truth: EstimandValue
    bias: float
    se: float | None


def _fit_index_model(setup: TransportSetup, data: TrialData) -> OutcomeModel:
    from .fitting import fit_model

    return fit_model(data, setup.model.link).as_model()


def step_one(setup: TransportSetup, measure: EffectMeasure) -> TransportEstimate:
    """Transport B vs A from the index trial to the comparator and anchor against C vs A."""
    comp = setup.comparator
    diag: dict = {}
    mechanism = setup.mechanism
    if mechanism == "maic" and measure.estimand is EstimandKind.CONDITIONAL:
        raise ConfigurationError("MAIC cannot target a conditional estimand; use mechanism 'stc'")

    if mechanism == "maic":
        data = setup.index_data
        if data is None:
            data = simulate_trial(setup.model, setup.index_population, (Treatment.A, Treatment.B),
                                  setup.n, derive_seed(setup.base_seed, INDEX_STREAM))
        d_ba, se, sol = maic_contrast(data, measure, comp.mu_x)
        diag.update(ess=sol.ess, weight_max=float(sol.weights.max()),
                    weight_min=float(sol.weights.min()), solver_iterations=sol.iterations)
        kind = "weighting"
    elif mechanism == "stc":
        model = setup.model
        if setup.mode == "estimated_model" and setup.index_data is not None:
            model = _fit_index_model(setup, setup.index_data)
        elif setup.mode == "estimated_model":
            data = simulate_trial(setup.model, setup.index_population, (Treatment.A, Treatment.B),
                                  setup.n, derive_seed(setup.base_seed, INDEX_STREAM))
            model = _fit_index_model(setup, data)
        gmode = MONTE_CARLO if setup.monte_carlo else QUADRATURE
        d_ba, se = gcomp_contrast(model, measure, comp, Treatment.B, Treatment.A, gmode,
                                  setup.n, derive_seed(setup.base_seed, GCOMP_STREAM))
        kind = "gcomp"
    else:
        raise ConfigurationError(f"unknown mechanism {mechanism!r}")

    d_ca = effect(setup.model, measure, comp, Treatment.C, Treatment.A).value
    diag.update(delta_BA=d_ba, delta_CA=d_ca)
    return TransportEstimate(anchored_indirect(d_ba, d_ca), measure, (Treatment.B, Treatment.C),
                             setup.index_population.label, comp.label, kind, se, diag)


def anchored_truth(model: OutcomeModel, measure: EffectMeasure, pop: PopulationSpec,
                   method: str = QUADRATURE, n: int | None = None,
                   seed: int | None = None) -> EstimandValue:
    """True B vs C estimand in ``pop``, built as (B vs A) - (C vs A)."""
    if method == MONTE_CARLO:
        # B-A minus C-A on shared individuals equals B-C up to rounding
        return effect(model, measure, pop, Treatment.B, Treatment.C, method=MONTE_CARLO, n=n, seed=seed)
    ba = effect(model, measure, pop, Treatment.B, Treatment.A).value
    ca = effect(model, measure, pop, Treatment.C, Treatment.A).value
    return EstimandValue(anchored_indirect(ba, ca), measure, pop.label,
                         (Treatment.B, Treatment.C), QUADRATURE, mu_x=pop.mu_x)


def two_step_pipeline(setup: TransportSetup, measure: EffectMeasure) -> list[BiasRow]:
    """Step 1 to the comparator, then direct (unchanged) transport to every grid population.

    Bias is transported minus truth at each target.
    """
    step1 = step_one(setup, measure)
    method = MONTE_CARLO if setup.monte_carlo else QUADRATURE

    def one(i):
        pop = setup.grid.populations[i]
        truth = anchored_truth(setup.model, measure, pop, method, setup.n,
                               derive_seed(setup.base_seed, i))
        moved = TransportEstimate(step1.value, measure, step1.pair, setup.comparator.label,
                                  pop.label, "direct", step1.se,
                                  dict(step1.diagnostics, step1_mechanism=step1.mechanism))
        se = None
        if setup.monte_carlo:
            se = math.sqrt((step1.se or 0.0) ** 2 + (truth.se or 0.0) ** 2)
        return BiasRow(pop, moved, truth, step1.value - truth.value, se)

    return ordered_map(one, range(len(setup.grid)))
