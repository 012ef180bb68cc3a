import json
import math

import numpy as np
import pytest

from transportlab.model import ConfigurationError, EffectMeasure
from transportlab.population import PopulationSpec, default_grid
from transportlab.propositions import (
    EXPECTED_FAIL,
    FAIL,
    PASS,
    RATIO_ALIASES,
    ClassificationError,
    check_a1,
    check_a2,
    check_b0,
    check_b2_counterexample,
    check_b3,
    classify_measure,
    flatness_concordance,
    format_reports,
    verdict_for,
)
from transportlab.studies import (
    STUDIES,
    linear_model,
    log_binomial_model,
    logistic_model,
    study_measures,
    weibull_model,
)

GRID = default_grid()
PROBES = np.linspace(-1, 1, 50)
TAU = 2.0


def cm(kind, tau=None):
    return EffectMeasure(kind, "conditional", tau)


def mm(kind, tau=None):
    return EffectMeasure(kind, "marginal", tau)


# --- A1 -----------------------------------------------------------------

def test_a1_logit_sema():
    r = check_a1(logistic_model(True), cm("log_odds_ratio"), PROBES)
    assert r.status == PASS
    assert r.values["max"] == pytest.approx(1.0, abs=1e-12)


def test_a1_logit_no_sema_spread_two():
    r = check_a1(logistic_model(False), cm("log_odds_ratio"), PROBES)
    assert r.status == EXPECTED_FAIL
    assert r.values["spread"] == pytest.approx(2.0, abs=1e-12)


def test_a1_rmst_ratio_misaligned():
    r = check_a1(weibull_model(True), cm("log_rmst_ratio", TAU), PROBES)
    assert r.status == EXPECTED_FAIL and not r.premise
    assert r.values["spread"] > 1e-3


def test_a1_needs_conditional():
    with pytest.raises(ConfigurationError):
        check_a1(linear_model(), mm("mean_difference"), PROBES)


# --- A2 -----------------------------------------------------------------

def test_a2_mean_difference():
    r = check_a2(linear_model(True), mm("mean_difference"), GRID)
    assert r.status == PASS
    assert r.values["min"] == pytest.approx(5.0, abs=1e-12)


def test_a2_log_or_expected_fail():
    r = check_a2(logistic_model(True), mm("log_odds_ratio"), GRID)
    assert r.status == EXPECTED_FAIL and r.values["spread"] > 1e-3


def test_a2_log_link_induced():
    r = check_a2(log_binomial_model(True), mm("log_risk_ratio"), GRID)
    assert r.status == PASS
    assert r.values["max"] == pytest.approx(math.log(14 / 11), abs=1e-8)


# --- B0 / B2 / B3 -------------------------------------------------------

@pytest.mark.parametrize("pop", list(GRID))
def test_b0_linear(pop):
    r = check_b0(linear_model(False), pop)
    assert r.status == PASS and r.values["max_gap"] <= 1e-12


def test_b0_rmst_difference():
    r = check_b0(weibull_model(False), PopulationSpec.uniform(0.25), mm("rmst_difference", TAU))
    assert r.status == PASS and r.values["max_gap"] <= 1e-8


def test_b0_refuses_log_or():
    with pytest.raises(ConfigurationError, match="not directly collapsible"):
        check_b0(logistic_model(True), GRID.comparator, mm("log_odds_ratio"))


def test_b2_values():
    r = check_b2_counterexample()
    assert r.status == PASS
    assert r.values["conditional_log_rr"] == pytest.approx(0.34657359027997264, abs=1e-12)
    assert r.values["marginal_log_rr"] == pytest.approx(0.09531017980432493, abs=1e-12)
    assert r.values["difference"] == pytest.approx(0.2512634104756477, abs=1e-12)


def test_b3_sema():
    r = check_b3(log_binomial_model(True), GRID)
    assert r.status == PASS
    assert r.values["gamma_B_minus_gamma_C"] == pytest.approx(0.24116205681688824, abs=1e-12)
    assert r.values["spread_BA"] > 1e-3 and r.values["spread_CA"] > 1e-3


def test_b3_no_sema_varies():
    r = check_b3(log_binomial_model(False), GRID)
    assert r.status == EXPECTED_FAIL and r.values["spread_BC"] > 1e-3


def test_b3_needs_log_link():
    with pytest.raises(ConfigurationError):
        check_b3(logistic_model(True), GRID)


# --- classification -----------------------------------------------------

def test_classify_examples():
    assert classify_measure("mean_difference", "marginal", "identity", True).directly_transportable
    assert not classify_measure("log_odds_ratio", "marginal", "logit", True).directly_transportable
    v = classify_measure("rmst_difference", "marginal", "log_hazard_weibull", True)
    assert not v.directly_transportable and "scale misalignment" in v.reason
    assert v.collapsible == "directly_collapsible"


def test_classify_unsupported_pair():
    with pytest.raises(ClassificationError):
        classify_measure("risk_difference", "marginal", "identity", True)
    with pytest.raises(ClassificationError):
        classify_measure("conditional_log_hazard_ratio", "marginal", "log_hazard_weibull", True)
    with pytest.raises(ClassificationError):
        classify_measure("hazard_difference", "marginal", "log", True)


@pytest.mark.parametrize("ratio,log_kind", list(RATIO_ALIASES.items()))
def test_ratio_and_log_share_verdicts(ratio, log_kind):
    links = {"log_odds_ratio": ["logit", "log"], "log_risk_ratio": ["logit", "log"],
             "log_rmst_ratio": ["log_hazard_weibull"],
             "conditional_log_hazard_ratio": ["log_hazard_weibull"]}[log_kind.value]
    ests = ["conditional"] if "hazard" in ratio else ["conditional", "marginal"]
    for link in links:
        for est in ests:
            for sema in (True, False):
                assert classify_measure(ratio, est, link, sema) == classify_measure(log_kind, est, link, sema)


SCENARIOS = [(study, sema, msr) for study in STUDIES for sema in (True, False)
             for msr in study_measures(study, TAU)]


@pytest.mark.parametrize("study,sema,msr", SCENARIOS, ids=lambda v: getattr(v, "label", str(v)))
def test_rule_numeric_concordance(study, sema, msr):
    r = flatness_concordance(STUDIES[study][0](sema), msr, GRID)
    assert r.status != FAIL, r


def test_concordance_with_hazard_ratio():
    for sema in (True, False):
        r = flatness_concordance(weibull_model(sema), cm("conditional_log_hazard_ratio"), GRID)
        assert r.status != FAIL


def test_genuine_spreads_far_above_threshold():
    spreads = [flatness_concordance(STUDIES[s][0](sema), msr, GRID).values["spread"]
               for s, sema, msr in SCENARIOS]
    nonflat = [s for s in spreads if s >= 1e-6]
    flat = [s for s in spreads if s < 1e-6]
    assert min(nonflat) >= 1e-3
    assert max(flat) <= 1e-10


@pytest.mark.parametrize("study,sema,msr", [s for s in SCENARIOS if s[2].estimand.value == "marginal"],
                         ids=lambda v: getattr(v, "label", str(v)))
def test_a2_pass_implies_a1_pass(study, sema, msr):
    model = STUDIES[study][0](sema)
    if check_a2(model, msr, GRID).status == PASS:
        assert check_a1(model, msr.with_estimand("conditional"), PROBES).status == PASS


def test_verdict_population_dependence():
    assert verdict_for(linear_model(True), mm("mean_difference")).population_dependence == "none"
    assert verdict_for(linear_model(False), mm("mean_difference")).population_dependence == "covariate_means"
    assert verdict_for(logistic_model(True), mm("log_odds_ratio")).population_dependence == "full_distribution"


# --- reporting ----------------------------------------------------------

def test_reports_render():
    reports = [check_b2_counterexample(), check_a1(logistic_model(False), cm("log_odds_ratio"), PROBES)]
    text = format_reports(reports)
    assert "PASS" in text and "EXPECTED-FAIL" in text
    assert len(text.splitlines()) == 3
    json.dumps([r.to_dict() for r in reports])
