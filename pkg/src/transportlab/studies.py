"""Data-generating models of the illustrative simulation studies."""
from __future__ import annotations

import math

from .model import EffectMeasure, Link, OutcomeModel
from .population import PopulationSpec

DEFAULT_TAU = 2.0


def linear_model(sema: bool = True, sigma: float = 1.0) -> OutcomeModel:
    """Gaussian outcome, identity link."""
    return OutcomeModel(Link.IDENTITY, beta0=20.0, beta1=10.0,
                        beta2={"B": 2.0, "C": 2.0 if sema else -4.0},
                        gamma={"B": 10.0, "C": 5.0}, sigma=sigma)


def logistic_model(sema: bool = True) -> OutcomeModel:
    return OutcomeModel(Link.LOGIT, beta0=0.0, beta1=-1.0,
                        beta2={"B": -3.0, "C": -3.0 if sema else -4.0},
                        gamma={"B": -3.0, "C": -4.0})


def log_binomial_model(sema: bool = True) -> OutcomeModel:
    return OutcomeModel(Link.LOG, beta0=-3.0, beta1=0.8,
                        beta2={"B": -0.6, "C": -0.6 if sema else -1.0},
                        gamma={"B": math.log(1.40), "C": math.log(1.10)})


def weibull_model(sema: bool = True) -> OutcomeModel:
    """Weibull PH with shape 1.5; effect modification on the log-hazard scale."""
    return OutcomeModel(Link.LOG_HAZARD_WEIBULL, beta0=-1.0, beta1=math.log(0.25),
                        beta2={"B": math.log(0.9) if sema else math.log(0.7), "C": math.log(0.9)},
                        gamma={"B": math.log(0.4), "C": math.log(0.6)}, shape=1.5)


def two_point_model() -> OutcomeModel:
    """Log-link model reproducing risks 0.1/0.9 (A) and 0.2/0.9 (B) at X = 0/1."""
    return OutcomeModel(Link.LOG, beta0=math.log(0.1), beta1=math.log(9.0),
                        beta2={"B": -math.log(2.0)}, gamma={"B": math.log(2.0)})


def two_point_population() -> PopulationSpec:
    return PopulationSpec.discrete([(0.0, 0.5), (1.0, 0.5)], label="two-point")


STUDIES = {
    "linear": (linear_model, ("mean_difference",)),
    "logistic": (logistic_model, ("log_odds_ratio",)),
    "log_binomial": (log_binomial_model, ("log_risk_ratio",)),
    "weibull": (weibull_model, ("rmst_difference", "log_rmst_ratio")),
}


def study_measures(study: str, tau: float = DEFAULT_TAU) -> list[EffectMeasure]:
    kinds = STUDIES[study][1]
    out = []
    for k in kinds:
        for est in ("conditional", "marginal"):
            out.append(EffectMeasure(k, est, tau if "rmst" in k else None))
    return out
