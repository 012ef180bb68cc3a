import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from transportlab.model import (
    ConfigurationError,
    EffectMeasure,
    Link,
    OutcomeModel,
    Treatment,
    conditional_contrast_at,
    link_forward,
    link_inverse,
    linear_predictor,
    scale_aligned,
)
from transportlab.studies import linear_model, log_binomial_model, logistic_model, weibull_model

A, B, C = Treatment.A, Treatment.B, Treatment.C
finite_x = st.floats(-5, 5, allow_nan=False)

ALIGNED = [
    (linear_model, "mean_difference"),
    (logistic_model, "log_odds_ratio"),
    (log_binomial_model, "log_risk_ratio"),
    (weibull_model, "conditional_log_hazard_ratio"),
]


def cond(kind, tau=None):
    return EffectMeasure(kind, "conditional", tau)


# --- linear predictor ---------------------------------------------------

def test_linear_predictor_mean_difference_model():
    assert linear_predictor(linear_model(), B, 0.0) == 30.0


def test_linear_predictor_anchor_is_intercept():
    for make in (linear_model, logistic_model, log_binomial_model, weibull_model):
        m = make(False)
        assert linear_predictor(m, A, 0.0) == m.beta0


def test_linear_predictor_logit_no_sema():
    assert linear_predictor(logistic_model(False), C, 0.5) == pytest.approx(-6.5, abs=1e-15)


@given(finite_x)
def test_anchor_has_no_treatment_terms(x):
    m = logistic_model(False)
    assert m.eta(A, x) == m.beta0 + m.beta1 * x
    assert m.beta2[A] == 0.0 and m.gamma[A] == 0.0


def test_anchor_coefficients_rejected():
    with pytest.raises(ConfigurationError):
        OutcomeModel("identity", 0.0, 1.0, gamma={"A": 1.0})


# --- links --------------------------------------------------------------

def test_link_inverse_examples():
    assert link_inverse(Link.LOGIT, 0.0) == 0.5
    assert link_inverse(Link.LOG, 0.0) == 1.0
    assert link_inverse(Link.LOGIT, -3.0) == pytest.approx(1 / (1 + math.exp(3)), rel=1e-15)
    assert link_inverse(Link.LOGIT, -3.0) == pytest.approx(0.04742587317756678, abs=1e-15)


def test_expit_saturates_only_at_overflow():
    assert link_inverse(Link.LOGIT, -800.0) == 1e-15
    assert link_inverse(Link.LOGIT, 800.0) == 1 - 1e-15
    # inside the representable range the value is exact, not clamped
    assert 0 < link_inverse(Link.LOGIT, -700.0) < 1e-300


@given(st.floats(-30, 30))
def test_link_round_trip(u):
    for link in (Link.LOG, Link.IDENTITY):
        assert link_forward(link, link_inverse(link, u)) == pytest.approx(u, abs=1e-12)


@given(st.floats(-30, 0))
def test_logit_round_trip_lower_half(u):
    assert link_forward(Link.LOGIT, link_inverse(Link.LOGIT, u)) == pytest.approx(u, abs=1e-12)


@given(st.floats(0, 30))
def test_logit_round_trip_upper_half_within_conditioning(u):
    # once expit(u) is rounded near 1, 1 - p carries only eps / (1 - p) relative accuracy
    p = link_inverse(Link.LOGIT, u)
    bound = 1e-12 + 4 * np.finfo(float).eps / (1 - p)
    assert abs(link_forward(Link.LOGIT, p) - u) <= bound


@given(st.floats(1e-6, 1 - 1e-6))
def test_link_round_trip_probability(p):
    assert link_inverse(Link.LOGIT, link_forward(Link.LOGIT, p)) == pytest.approx(p, abs=1e-12)


def test_logit_inverse_ranges():
    u = np.linspace(-30, 30, 101)
    p = link_inverse(Link.LOGIT, u)
    assert np.all((p > 0) & (p < 1))
    assert np.all(link_inverse(Link.LOG, u) > 0)


# --- measures and models ------------------------------------------------

def test_marginal_hazard_ratio_rejected():
    with pytest.raises(ConfigurationError):
        EffectMeasure("conditional_log_hazard_ratio", "marginal")


def test_rmst_needs_tau_and_others_refuse_it():
    with pytest.raises(ConfigurationError):
        EffectMeasure("rmst_difference", "marginal")
    with pytest.raises(ConfigurationError):
        EffectMeasure("rmst_difference", "marginal", tau=0.0)
    with pytest.raises(ConfigurationError):
        EffectMeasure("mean_difference", "marginal", tau=2.0)


def test_h_transform_table():
    expected = {"mean_difference": "identity", "risk_difference": "identity",
                "rmst_difference": "identity", "log_odds_ratio": "logit",
                "log_risk_ratio": "log", "log_rmst_ratio": "log"}
    for kind, h in expected.items():
        tau = 2.0 if "rmst" in kind else None
        assert EffectMeasure(kind, "marginal", tau).h == h


def test_shape_required_iff_weibull():
    with pytest.raises(ConfigurationError):
        OutcomeModel("log_hazard_weibull", 0.0, 0.0)
    with pytest.raises(ConfigurationError):
        OutcomeModel("logit", 0.0, 0.0, shape=1.5)


def test_sigma_default_and_validation():
    assert OutcomeModel("identity", 0.0, 1.0).sigma == 1.0
    with pytest.raises(ConfigurationError):
        OutcomeModel("identity", 0.0, 1.0, sigma=-1.0)
    with pytest.raises(ConfigurationError):
        OutcomeModel("logit", 0.0, 1.0, sigma=1.0)


@pytest.mark.parametrize("make", [linear_model, logistic_model, log_binomial_model, weibull_model])
def test_sema_flag(make):
    assert make(True).sema_holds()
    assert not make(False).sema_holds()


@pytest.mark.parametrize("make", [linear_model, logistic_model, log_binomial_model, weibull_model])
def test_model_dict_round_trip(make):
    m = make(False)
    assert OutcomeModel.from_dict(m.to_dict()) == m


# --- conditional contrasts ----------------------------------------------

@given(finite_x)
def test_logit_sema_conditional_log_or_is_one(x):
    assert conditional_contrast_at(logistic_model(True), cond("log_odds_ratio"), B, C, x) == pytest.approx(1.0, abs=1e-12)


def test_mean_difference_b_vs_a_at_zero():
    assert conditional_contrast_at(linear_model(), cond("mean_difference"), B, A, 0.0) == 10.0


def test_degenerate_pair_rejected():
    for t in Treatment:
        with pytest.raises(ConfigurationError):
            conditional_contrast_at(linear_model(), cond("mean_difference"), t, t, 0.0)


def test_incompatible_scale_names_both():
    with pytest.raises(ConfigurationError, match="risk_difference.*identity"):
        conditional_contrast_at(linear_model(), cond("risk_difference"), B, C, 0.0)


def test_marginal_measure_rejected_pointwise():
    with pytest.raises(ConfigurationError):
        conditional_contrast_at(linear_model(), EffectMeasure("mean_difference", "marginal"), B, C, 0.0)


@pytest.mark.parametrize("make,kind", ALIGNED)
@given(x1=finite_x, x2=finite_x)
def test_scale_alignment_law(make, kind, x1, x2):
    m = make(True)
    assert scale_aligned(kind, m.link)
    msr = cond(kind)
    assert conditional_contrast_at(m, msr, B, C, x1) == pytest.approx(
        conditional_contrast_at(m, msr, B, C, x2), abs=1e-12)


@pytest.mark.parametrize("make,kind", ALIGNED)
@given(x=finite_x, sema=st.booleans())
def test_anchored_decomposition(make, kind, x, sema):
    m = make(sema)
    msr = cond(kind)
    bc = conditional_contrast_at(m, msr, B, C, x)
    ba = conditional_contrast_at(m, msr, B, A, x)
    ca = conditional_contrast_at(m, msr, C, A, x)
    assert bc == pytest.approx(ba - ca, abs=1e-12)


def test_misaligned_conditional_contrast_uses_rmst():
    m = weibull_model(True)
    msr = cond("log_rmst_ratio", 2.0)
    vals = [conditional_contrast_at(m, msr, B, C, x) for x in (-1.0, 0.0, 1.0)]
    assert max(vals) - min(vals) > 1e-3
