"""Executable checks of the transportability / collapsibility results and the
rule-based classification of effect measures."""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .estimands import conditional_effect, effect_curve, marginal_effect
from .model import (
    ConfigurationError,
    EffectMeasure,
    EstimandKind,
    Link,
    MeasureKind,
    OutcomeModel,
    Treatment,
    check_compatible,
    conditional_contrast_at,
    scale_aligned,
)
from .population import PopulationGrid, PopulationSpec
from .studies import two_point_model, two_point_population

PASS = "PASS"
FAIL = "FAIL"
EXPECTED_FAIL = "EXPECTED-FAIL"

FLAT_TOL = 1e-6  # curve flatness threshold used for rule/numeric concordance

B, C, A = Treatment.B, Treatment.C, Treatment.A


class ClassificationError(ConfigurationError):
    pass


class Collapsibility(str, enum.Enum):
    DIRECTLY_COLLAPSIBLE = "directly_collapsible"
    COLLAPSIBLE = "collapsible"
    NON_COLLAPSIBLE = "non_collapsible"


_COLLAPSIBILITY = {
    MeasureKind.MEAN_DIFFERENCE: Collapsibility.DIRECTLY_COLLAPSIBLE,
    MeasureKind.RISK_DIFFERENCE: Collapsibility.DIRECTLY_COLLAPSIBLE,
    MeasureKind.RMST_DIFFERENCE: Collapsibility.DIRECTLY_COLLAPSIBLE,
    MeasureKind.LOG_RISK_RATIO: Collapsibility.COLLAPSIBLE,
    MeasureKind.LOG_RMST_RATIO: Collapsibility.COLLAPSIBLE,
    MeasureKind.LOG_ODDS_RATIO: Collapsibility.NON_COLLAPSIBLE,
    MeasureKind.CONDITIONAL_LOG_HAZARD_RATIO: Collapsibility.NON_COLLAPSIBLE,
}

# ratio measures share verdicts with their logarithm
RATIO_ALIASES = {
    "odds_ratio": MeasureKind.LOG_ODDS_RATIO,
    "risk_ratio": MeasureKind.LOG_RISK_RATIO,
    "rmst_ratio": MeasureKind.LOG_RMST_RATIO,
    "conditional_hazard_ratio": MeasureKind.CONDITIONAL_LOG_HAZARD_RATIO,
}


@dataclass(frozen=True)
class TransportVerdict:
    measure_kind: str
    estimand_kind: str
    link: str
    sema: bool
    scale_aligned: bool
    collapsible: str
    directly_transportable: bool
    population_dependence: str  # none | covariate_means | full_distribution
    reason: str

    def to_dict(self) -> dict:
        return asdict(self)


def classify_measure(measure_kind, estimand_kind, link, sema: bool) -> TransportVerdict:
    """Rule-based transportability verdict for the B vs C contrast."""
    kind = RATIO_ALIASES.get(getattr(measure_kind, "value", measure_kind), measure_kind)
    try:
        kind, link = MeasureKind(kind), Link(link)
        estimand = EstimandKind(estimand_kind)
        check_compatible(kind, link)
    except (ValueError, ConfigurationError) as exc:
        raise ClassificationError(f"unsupported (measure, link) pair: {exc}") from exc
    if kind is MeasureKind.CONDITIONAL_LOG_HAZARD_RATIO and estimand is EstimandKind.MARGINAL:
        raise ClassificationError("marginal hazard ratios are not supported")

    aligned = scale_aligned(kind, link)
    coll = _COLLAPSIBILITY[kind]
    conditional = estimand is EstimandKind.CONDITIONAL

    if not aligned:
        ok, reason, dep = False, "scale misalignment: h(g^-1(u)) != u", "full_distribution"
    elif not conditional and coll is Collapsibility.NON_COLLAPSIBLE:
        ok, reason, dep = False, "non-collapsible marginal measure", "full_distribution"
    elif not sema:
        ok = False
        reason = "shared effect modifier assumption violated"
        # linear effect modification: conditional and directly collapsible marginals
        # move only with the covariate mean
        if conditional or coll is Collapsibility.DIRECTLY_COLLAPSIBLE:
            dep = "covariate_means"
        else:
            dep = "full_distribution"
    else:
        ok, dep = True, "none"
        if conditional:
            reason = "SEMA and scale alignment: contrast equals gamma_B - gamma_C"
        elif coll is Collapsibility.DIRECTLY_COLLAPSIBLE:
            reason = "SEMA, scale alignment and direct collapsibility"
        else:
            reason = "SEMA and scale alignment induce direct collapsibility of the B vs C contrast"
    return TransportVerdict(kind.value, estimand.value, link.value, bool(sema), aligned,
                            coll.value, ok, dep, reason)


def verdict_for(model: OutcomeModel, measure: EffectMeasure) -> TransportVerdict:
    return classify_measure(measure.kind, measure.estimand, model.link, model.sema_holds())


# ---------------------------------------------------------------------------
# reports


@dataclass
class CheckReport:
    check: str
    status: str
    premise: bool
    scenario: str = ""
    measure: str = ""
    values: dict = field(default_factory=dict)
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status != FAIL

    def to_dict(self) -> dict:
        return asdict(self)


def _status(premise: bool, flat: bool) -> str:
    if premise:
        return PASS if flat else FAIL
    return FAIL if flat else EXPECTED_FAIL


def _delta(model: OutcomeModel) -> float:
    return model.gamma[B] - model.gamma[C]


def check_a1(model: OutcomeModel, measure: EffectMeasure, probe_points: Sequence[float],
             tol: float = 1e-10, scenario: str = "") -> CheckReport:
    """Constancy in x of the conditional B vs C contrast under SEMA + scale alignment."""
    if measure.estimand is not EstimandKind.CONDITIONAL:
        raise ConfigurationError("check_a1 needs a conditional measure")
    vals = np.array([conditional_contrast_at(model, measure, B, C, x) for x in probe_points])
    spread = float(vals.max() - vals.min())
    premise = model.sema_holds() and scale_aligned(measure.kind, model.link)
    flat = spread < tol
    values = {"spread": spread, "min": float(vals.min()), "max": float(vals.max())}
    status = _status(premise, flat)
    if premise:
        values["gamma_B_minus_gamma_C"] = _delta(model)
        if flat and abs(float(vals.mean()) - _delta(model)) > tol:
            status = FAIL
    return CheckReport("A1", status, premise, scenario, measure.label, values,
                       f"conditional B vs C contrast spread {spread:.3e} over {len(vals)} probes")


def check_a2(model: OutcomeModel, measure: EffectMeasure, grid: PopulationGrid,
             tol: float = 1e-8, scenario: str = "") -> CheckReport:
    """Invariance of the marginal B vs C curve across populations."""
    if measure.estimand is not EstimandKind.MARGINAL:
        raise ConfigurationError("check_a2 needs a marginal measure")
    curve = np.array([v.value for v in effect_curve(model, measure, grid, B, C)])
    spread = float(curve.max() - curve.min())
    premise = verdict_for(model, measure).directly_transportable
    flat = spread < tol
    status = _status(premise, flat)
    values = {"spread": spread, "min": float(curve.min()), "max": float(curve.max())}
    if premise:
        values["gamma_B_minus_gamma_C"] = _delta(model)
        if flat and abs(float(curve.mean()) - _delta(model)) > tol:
            status = FAIL
    return CheckReport("A2", status, premise, scenario, measure.label, values,
                       f"marginal B vs C curve spread {spread:.3e} over {len(grid)} populations")


def check_b0(model: OutcomeModel, pop: PopulationSpec, measure: EffectMeasure | None = None,
             tol: float = 1e-10, scenario: str = "") -> CheckReport:
    """Difference of directly collapsible anchored contrasts is directly collapsible."""
    if measure is None:
        kind = {Link.IDENTITY: "mean_difference", Link.LOGIT: "risk_difference",
                Link.LOG: "risk_difference"}.get(model.link)
        if kind is None:
            raise ConfigurationError("pass an RMST measure (with tau) for Weibull models")
        measure = EffectMeasure(kind, "marginal")
    if _COLLAPSIBILITY[measure.kind] is not Collapsibility.DIRECTLY_COLLAPSIBLE:
        raise ConfigurationError(f"{measure.kind.value} is not directly collapsible; B0 does not apply")
    marg = measure.with_estimand("marginal")
    cond = measure.with_estimand("conditional")
    m_ba = marginal_effect(model, marg, pop, B, A).value
    m_ca = marginal_effect(model, marg, pop, C, A).value
    c_ba = conditional_effect(model, cond, pop, B, A).value
    c_ca = conditional_effect(model, cond, pop, C, A).value
    c_bc = conditional_effect(model, cond, pop, B, C).value
    m_bc = m_ba - m_ca
    gaps = [abs(m_ba - c_ba), abs(m_ca - c_ca), abs(m_bc - c_bc)]
    status = PASS if max(gaps) <= tol else FAIL
    return CheckReport("B0", status, True, scenario, measure.kind.value,
                       {"marginal_BC": m_bc, "conditional_BC": c_bc, "max_gap": max(gaps)},
                       f"marginal vs population-average conditional gap {max(gaps):.3e} in {pop.label}")


B2_CONDITIONAL = 0.5 * math.log(2.0)
B2_MARGINAL = math.log(1.1)


def check_b2_counterexample(tol: float = 1e-12) -> CheckReport:
    """Two-point covariate example where log RR is not directly collapsible."""
    model, pop = two_point_model(), two_point_population()
    cond = conditional_effect(model, EffectMeasure("log_risk_ratio", "conditional"), pop, B, A).value
    marg = marginal_effect(model, EffectMeasure("log_risk_ratio", "marginal"), pop, B, A).value
    ok = (abs(cond - B2_CONDITIONAL) <= tol and abs(marg - B2_MARGINAL) <= tol
          and abs(cond - marg) > tol)
    return CheckReport("B2", PASS if ok else FAIL, True, "appendixB2", "log_risk_ratio",
                       {"conditional_log_rr": cond, "marginal_log_rr": marg, "difference": cond - marg},
                       f"population-average conditional log RR {cond:.6f} vs marginal log RR {marg:.6f}")


def check_b3(model: OutcomeModel, grid: PopulationGrid, tol: float = 1e-8,
             vary_tol: float = 1e-3, scenario: str = "") -> CheckReport:
    """Marginal B vs C log RR under a log link is invariant given SEMA, though B vs A is not."""
    if model.link is not Link.LOG:
        raise ConfigurationError("check_b3 needs a log-link model")
    measure = EffectMeasure("log_risk_ratio", "marginal")
    curves = {}
    for t, s in ((B, C), (B, A), (C, A)):
        curves[f"{t.value}{s.value}"] = np.array([v.value for v in effect_curve(model, measure, grid, t, s)])
    bc = curves["BC"]
    dev = float(np.max(np.abs(bc - _delta(model))))
    spreads = {k: float(v.max() - v.min()) for k, v in curves.items()}
    premise = model.sema_holds()
    anchored_vary = spreads["BA"] > vary_tol and spreads["CA"] > vary_tol
    if premise:
        status = PASS if dev <= tol and anchored_vary else FAIL
    else:
        status = EXPECTED_FAIL if spreads["BC"] >= tol else FAIL
    return CheckReport("B3", status, premise, scenario, measure.label,
                       {"max_abs_dev_from_gamma_diff": dev, "gamma_B_minus_gamma_C": _delta(model),
                        **{f"spread_{k}": v for k, v in spreads.items()}},
                       "marginal log RR B vs C against anchored B vs A / C vs A curves")


def flatness_concordance(model: OutcomeModel, measure: EffectMeasure, grid: PopulationGrid,
                         scenario: str = "", tol: float = FLAT_TOL) -> CheckReport:
    """Rule-based verdict vs. empirical flatness of the B vs C curve."""
    verdict = verdict_for(model, measure)
    curve = np.array([v.value for v in effect_curve(model, measure, grid, B, C)])
    spread = float(curve.max() - curve.min())
    flat = spread < tol
    agree = flat == verdict.directly_transportable
    status = (PASS if flat else EXPECTED_FAIL) if agree else FAIL
    return CheckReport("classification", status, verdict.directly_transportable, scenario, measure.label,
                       {"spread": spread, "sema": verdict.sema, "aligned": verdict.scale_aligned},
                       verdict.reason)


# ---------------------------------------------------------------------------
# text rendering


def format_reports(reports: Sequence[CheckReport]) -> str:
    rows = [("check", "scenario", "measure", "status", "detail")]
    for r in reports:
        rows.append((r.check, r.scenario, r.measure, r.status, r.message))
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    out = []
    for row in rows:
        out.append("  ".join(c.ljust(w) for c, w in zip(row[:4], widths)) + "  " + row[4])
    return "\n".join(out)
