"""Outcome models, link algebra and pointwise conditional contrasts."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


class ConfigurationError(ValueError):
    """Raised for invalid model / measure / scenario configuration."""


class Treatment(str, enum.Enum):
    A = "A"  # anchor / common comparator
    B = "B"
    C = "C"


class Link(str, enum.Enum):
    IDENTITY = "identity"
    LOGIT = "logit"
    LOG = "log"
    LOG_HAZARD_WEIBULL = "log_hazard_weibull"


class MeasureKind(str, enum.Enum):
    MEAN_DIFFERENCE = "mean_difference"
    RISK_DIFFERENCE = "risk_difference"
    LOG_ODDS_RATIO = "log_odds_ratio"
    LOG_RISK_RATIO = "log_risk_ratio"
    CONDITIONAL_LOG_HAZARD_RATIO = "conditional_log_hazard_ratio"
    RMST_DIFFERENCE = "rmst_difference"
    LOG_RMST_RATIO = "log_rmst_ratio"


class EstimandKind(str, enum.Enum):
    CONDITIONAL = "conditional"
    MARGINAL = "marginal"


RMST_KINDS = frozenset({MeasureKind.RMST_DIFFERENCE, MeasureKind.LOG_RMST_RATIO})

# transformation h applied to the mean outcome of each arm
_H = {
    MeasureKind.MEAN_DIFFERENCE: "identity",
    MeasureKind.RISK_DIFFERENCE: "identity",
    MeasureKind.RMST_DIFFERENCE: "identity",
    MeasureKind.LOG_ODDS_RATIO: "logit",
    MeasureKind.LOG_RISK_RATIO: "log",
    MeasureKind.LOG_RMST_RATIO: "log",
    MeasureKind.CONDITIONAL_LOG_HAZARD_RATIO: "log",
}

# links each measure can be evaluated from
_COMPATIBLE = {
    MeasureKind.MEAN_DIFFERENCE: {Link.IDENTITY},
    MeasureKind.RISK_DIFFERENCE: {Link.LOGIT, Link.LOG},
    MeasureKind.LOG_ODDS_RATIO: {Link.LOGIT, Link.LOG},
    MeasureKind.LOG_RISK_RATIO: {Link.LOGIT, Link.LOG},
    MeasureKind.CONDITIONAL_LOG_HAZARD_RATIO: {Link.LOG_HAZARD_WEIBULL},
    MeasureKind.RMST_DIFFERENCE: {Link.LOG_HAZARD_WEIBULL},
    MeasureKind.LOG_RMST_RATIO: {Link.LOG_HAZARD_WEIBULL},
}

_ALIGNED = {
    (MeasureKind.MEAN_DIFFERENCE, Link.IDENTITY),
    (MeasureKind.LOG_ODDS_RATIO, Link.LOGIT),
    (MeasureKind.LOG_RISK_RATIO, Link.LOG),
    (MeasureKind.CONDITIONAL_LOG_HAZARD_RATIO, Link.LOG_HAZARD_WEIBULL),
}

_EPS = 1e-15


@dataclass(frozen=True)
class EffectMeasure:
    kind: MeasureKind
    estimand: EstimandKind
    tau: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", MeasureKind(self.kind))
        object.__setattr__(self, "estimand", EstimandKind(self.estimand))
        if (self.kind is MeasureKind.CONDITIONAL_LOG_HAZARD_RATIO
                and self.estimand is EstimandKind.MARGINAL):
            raise ConfigurationError(
                "conditional_log_hazard_ratio has no marginal estimand")
        if self.kind in RMST_KINDS:
            if self.tau is None or not self.tau > 0:
                raise ConfigurationError(f"{self.kind.value} needs tau > 0, got {self.tau}")
        elif self.tau is not None:
            raise ConfigurationError(f"tau is only meaningful for RMST measures, not {self.kind.value}")

    @property
    def h(self) -> str:
        return _H[self.kind]

    @property
    def is_rmst(self) -> bool:
        return self.kind in RMST_KINDS

    def with_estimand(self, estimand) -> "EffectMeasure":
        return EffectMeasure(self.kind, EstimandKind(estimand), self.tau)

    @property
    def label(self) -> str:
        if self.kind.value.startswith("conditional_"):
            return self.kind.value
        return f"{self.estimand.value}_{self.kind.value}"

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "estimand": self.estimand.value}
        if self.tau is not None:
            d["tau"] = self.tau
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "EffectMeasure":
        return cls(d["kind"], d["estimand"], d.get("tau"))


def scale_aligned(kind: MeasureKind, link: Link) -> bool:
    """True when h composed with the inverse link is the identity."""
    return (MeasureKind(kind), Link(link)) in _ALIGNED


def check_compatible(kind: MeasureKind, link: Link) -> None:
    kind, link = MeasureKind(kind), Link(link)
    if link not in _COMPATIBLE[kind]:
        raise ConfigurationError(
            f"measure scale {kind.value!r} (h={_H[kind]}) cannot be computed from "
            f"a model on the {link.value!r} link scale")


def _treatment_map(values: Mapping | None) -> dict:
    out = {t: 0.0 for t in Treatment}
    for k, v in (values or {}).items():
        out[Treatment(k)] = float(v)
    return out


@dataclass(frozen=True)
class OutcomeModel:
    """Outcome model with linear predictor
    ``eta_t(x) = beta0 + beta1*x + beta2[t]*x + gamma[t]``.

    ``beta2`` and ``gamma`` are keyed by treatment; missing entries are 0 and
    the anchor A is forced to 0.  ``shape`` is the Weibull shape (required for
    the log-hazard link) and ``sigma`` the Gaussian noise SD used only when
    simulating identity-link outcomes.
    """

    link: Link
    beta0: float
    beta1: float
    beta2: Mapping = field(default_factory=dict)
    gamma: Mapping = field(default_factory=dict)
    shape: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        link = Link(self.link)
        object.__setattr__(self, "link", link)
        b2 = _treatment_map(self.beta2)
        g = _treatment_map(self.gamma)
        if b2[Treatment.A] != 0.0 or g[Treatment.A] != 0.0:
            raise ConfigurationError("beta2[A] and gamma[A] must be 0 (A is the anchor)")
        object.__setattr__(self, "beta2", b2)
        object.__setattr__(self, "gamma", g)
        if link is Link.LOG_HAZARD_WEIBULL:
            if self.shape is None or not self.shape > 0:
                raise ConfigurationError("Weibull log-hazard model needs shape > 0")
        elif self.shape is not None:
            raise ConfigurationError("shape is only valid for the log_hazard_weibull link")
        if link is Link.IDENTITY:
            sigma = 1.0 if self.sigma is None else self.sigma
            if not sigma > 0:
                raise ConfigurationError("sigma must be > 0")
            object.__setattr__(self, "sigma", float(sigma))
        elif self.sigma is not None:
            raise ConfigurationError("sigma is only valid for the identity link")

    def sema_holds(self) -> bool:
        return self.beta2[Treatment.B] == self.beta2[Treatment.C]

    def eta(self, t: Treatment, x):
        """Linear predictor; ``x`` may be a scalar or an array."""
        t = Treatment(t)
        return self.beta0 + (self.beta1 + self.beta2[t]) * x + self.gamma[t]

    def to_dict(self) -> dict:
        d = {
            "link": self.link.value,
            "beta0": self.beta0,
            "beta1": self.beta1,
            "beta2": {t.value: v for t, v in self.beta2.items() if t is not Treatment.A},
            "gamma": {t.value: v for t, v in self.gamma.items() if t is not Treatment.A},
        }
        if self.shape is not None:
            d["shape"] = self.shape
        if self.sigma is not None:
            d["sigma"] = self.sigma
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "OutcomeModel":
        return cls(
            link=d["link"],
            beta0=float(d["beta0"]),
            beta1=float(d["beta1"]),
            beta2=d.get("beta2", {}),
            gamma=d.get("gamma", {}),
            shape=d.get("shape"),
            sigma=d.get("sigma"),
        )


def linear_predictor(model: OutcomeModel, t: Treatment, x: float) -> float:
    return float(model.eta(t, x))


def expit(u):
    """Logistic function, saturated to [eps, 1-eps] only where exp overflows."""
    u = np.asarray(u, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(u >= 0, 1.0 / (1.0 + np.exp(-u)), np.exp(u) / (1.0 + np.exp(u)))
    # exp(u) underflow/overflow for |u| > ~709
    out = np.where(u < -709.0, _EPS, out)
    out = np.where(u > 709.0, 1.0 - _EPS, out)
    return out if out.ndim else float(out)


def logit(p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise FloatingPointError("logit argument outside (0, 1)")
    out = np.log(p) - np.log1p(-p)
    return out if out.ndim else float(out)


def link_inverse(link: Link, u):
    link = Link(link)
    if link is Link.IDENTITY:
        return u
    if link is Link.LOGIT:
        return expit(u)
    # log and Weibull log-hazard: exp(u); for Weibull this is the hazard multiplier
    return np.exp(u)


def link_forward(link: Link, mu):
    link = Link(link)
    if link is Link.IDENTITY:
        return mu
    if link is Link.LOGIT:
        return logit(mu)
    return np.log(mu)


def h_transform(h: str, value):
    if h == "identity":
        return value
    if h == "log":
        v = np.asarray(value, dtype=float)
        if np.any(v <= 0):
            raise FloatingPointError("log transform of a non-positive mean")
        return np.log(value)
    if h == "logit":
        return logit(value)
    raise ValueError(h)


def conditional_mean(model: OutcomeModel, t: Treatment, x, tau: float | None = None):
    """Pointwise mean outcome g^-1(eta_t(x)); for Weibull models the RMST up to tau."""
    if model.link is Link.LOG_HAZARD_WEIBULL:
        if tau is None:
            raise ConfigurationError("RMST of a Weibull model needs tau")
        from .estimands import rmst_closed_form

        return rmst_closed_form(np.exp(model.eta(t, x)), model.shape, tau)
    return link_inverse(model.link, model.eta(t, x))


def pointwise_contrast(model: OutcomeModel, measure: EffectMeasure, t, s, x):
    """Vectorised h(g^-1(eta_t(x))) - h(g^-1(eta_s(x))) (no pair validation)."""
    if scale_aligned(measure.kind, model.link):
        return model.eta(t, x) - model.eta(s, x)
    mt = conditional_mean(model, t, x, measure.tau)
    ms = conditional_mean(model, s, x, measure.tau)
    return h_transform(measure.h, mt) - h_transform(measure.h, ms)


def conditional_contrast_at(model: OutcomeModel, measure: EffectMeasure,
                            t: Treatment, s: Treatment, x: float) -> float:
    t, s = Treatment(t), Treatment(s)
    if t is s:
        raise ConfigurationError(f"contrast of {t.value} with itself is undefined")
    if measure.estimand is not EstimandKind.CONDITIONAL:
        raise ConfigurationError("conditional_contrast_at needs a conditional measure")
    check_compatible(measure.kind, model.link)
    if not math.isfinite(x):
        raise ValueError("x must be finite")
    return float(pointwise_contrast(model, measure, t, s, x))
