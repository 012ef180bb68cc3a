"""Outcome-model fitting: OLS, Bernoulli IRLS (logit / log link), Weibull PH MLE."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .model import Link, OutcomeModel, Treatment

_ACTIVE = (Treatment.B, Treatment.C)


class SingularDesignError(ValueError):
    def __init__(self, msg, columns=()):
        super().__init__(msg)
        self.columns = tuple(columns)


class ConvergenceError(RuntimeError):
    def __init__(self, msg, grad_norm=None, trace=None):
        super().__init__(msg)
        self.grad_norm = grad_norm
        self.trace = trace or []


class StepHalvingError(ConvergenceError):
    pass


@dataclass
class FitResult:
    names: list
    coef: np.ndarray
    covariance: np.ndarray
    converged: bool
    iterations: int
    loglik: float
    link: Link
    grad_norm: float = 0.0
    scale: float | None = None  # residual SD for linear fits
    extra: dict = field(default_factory=dict)

    @property
    def coefficients(self) -> dict:
        return dict(zip(self.names, map(float, self.coef)))

    def se(self, name: str) -> float:
        if name == "shape":
            i = self.names.index("log_shape")
            return float(math.exp(self.coef[i]) * math.sqrt(self.covariance[i, i]))
        i = self.names.index(name)
        return float(math.sqrt(self.covariance[i, i]))

    def get(self, name: str, default: float = 0.0) -> float:
        if name == "shape" and "log_shape" in self.names:
            return math.exp(self.coefficients["log_shape"])
        return self.coefficients.get(name, default)

    def contrast(self, x: float, t: Treatment, s: Treatment) -> tuple[float, float]:
        """Fitted eta_t(x) - eta_s(x) and its standard error."""
        g = np.zeros(len(self.names))
        for arm, sign in ((Treatment(t), 1.0), (Treatment(s), -1.0)):
            if arm is Treatment.A:
                continue
            for name, val in ((f"gamma_{arm.value}", 1.0), (f"beta2_{arm.value}", x)):
                if name in self.names:
                    g[self.names.index(name)] += sign * val
        return float(g @ self.coef), float(math.sqrt(g @ self.covariance @ g))

    def as_model(self) -> OutcomeModel:
        c = self.coefficients
        arms = [t for t in _ACTIVE if f"gamma_{t.value}" in c]
        return OutcomeModel(
            link=self.link,
            beta0=c["beta0"],
            beta1=c["beta1"],
            beta2={t.value: c[f"beta2_{t.value}"] for t in arms},
            gamma={t.value: c[f"gamma_{t.value}"] for t in arms},
            shape=self.get("shape") if self.link is Link.LOG_HAZARD_WEIBULL else None,
            sigma=self.scale if self.link is Link.IDENTITY else None,
        )

    def to_dict(self) -> dict:
        d = {
            "link": self.link.value,
            "coefficients": self.coefficients,
            "names": list(self.names),
            "covariance": self.covariance.tolist(),
            "converged": self.converged,
            "iterations": self.iterations,
            "loglik": self.loglik,
            "grad_norm": self.grad_norm,
        }
        if self.scale is not None:
            d["sigma"] = self.scale
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# ---------------------------------------------------------------------------
# design


def design_matrix(x, treatment, arms: Sequence[Treatment] | None = None):
    """Columns beta0, beta1, beta2_k, gamma_k for each active arm present."""
    x = np.asarray(x, dtype=float)
    labels = np.asarray([getattr(t, "value", t) for t in treatment])
    if arms is None:
        arms = [t for t in _ACTIVE if np.any(labels == t.value)]
    cols, names = [np.ones_like(x), x], ["beta0", "beta1"]
    for t in arms:
        ind = (labels == t.value).astype(float)
        cols.append(ind * x)
        names.append(f"beta2_{t.value}")
    for t in arms:
        cols.append((labels == t.value).astype(float))
        names.append(f"gamma_{t.value}")
    return np.column_stack(cols), names


def _rank_check(X: np.ndarray, names: Sequence[str], rtol: float = 1e-10):
    _, r, piv = linalg.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    rank = int(np.sum(d > rtol * d[0])) if d.size else 0
    if rank < X.shape[1]:
        bad = [names[i] for i in piv[rank:]]
        raise SingularDesignError(
            f"design is rank deficient ({rank} < {X.shape[1]}); collinear column(s): {', '.join(bad)}",
            bad)


def ols(X: np.ndarray, y: np.ndarray, names: Sequence[str]) -> FitResult:
    """Least squares via column-pivoted QR; raises on rank deficiency."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n < p + 1:
        raise ValueError(f"need at least {p + 1} observations, got {n}")
    q, r, piv = linalg.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    rank = int(np.sum(d > 1e-10 * d[0]))
    if rank < p:
        bad = [names[i] for i in piv[rank:]]
        raise SingularDesignError(
            f"design is rank deficient ({rank} < {p}); collinear column(s): {', '.join(bad)}", bad)
    beta = np.empty(p)
    beta[piv] = linalg.solve_triangular(r, q.T @ y)
    resid = y - X @ beta
    sigma2 = float(resid @ resid / (n - p))
    rinv = linalg.solve_triangular(r, np.eye(p))
    cov_p = rinv @ rinv.T
    cov = np.empty_like(cov_p)
    cov[np.ix_(piv, piv)] = cov_p
    cov *= sigma2
    ll = -0.5 * n * (math.log(2 * math.pi * sigma2) + (n - p) / n)
    grad = X.T @ resid / sigma2
    return FitResult(list(names), beta, 0.5 * (cov + cov.T), True, 1, ll, Link.IDENTITY,
                     float(np.max(np.abs(grad))), math.sqrt(sigma2))


def fit_linear(x, treatment, y) -> FitResult:
    X, names = design_matrix(x, treatment)
    return ols(X, y, names)


# ---------------------------------------------------------------------------
# Bernoulli GLM


_LOG_BOUNDARY = -1e-10  # log-link eta above this rounds mu to 1


def _glm_parts(eta, link: Link):
    """mean, d mean / d eta, variance."""
    if link is Link.LOGIT:
        mu = 1.0 / (1.0 + np.exp(-eta))
        return mu, mu * (1 - mu), mu * (1 - mu)
    mu = np.exp(eta)
    return mu, mu, mu * (1 - mu)


def glm_loglik(beta, X, y, link) -> float:
    link = Link(link)
    eta = X @ beta
    if link is Link.LOGIT:
        # y*eta - log(1 + e^eta)
        return float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    if np.any(eta >= _LOG_BOUNDARY):
        return -math.inf  # fitted risk at or above 1
    return float(np.sum(y * eta + (1 - y) * np.log(-np.expm1(eta))))


def glm_score(beta, X, y, link) -> np.ndarray:
    link = Link(link)
    eta = X @ beta
    if link is Link.LOGIT:
        mu = 1.0 / (1.0 + np.exp(-eta))
        return X.T @ (y - mu)
    mu = np.exp(eta)
    return X.T @ ((y - mu) / (1 - mu))


def glm_information(beta, X, link) -> np.ndarray:
    _, dmu, var = _glm_parts(X @ beta, Link(link))
    w = dmu * dmu / var
    return (X * w[:, None]).T @ X


def irls(X, y, link, names, tol: float = 1e-8, max_iter: int = 100) -> FitResult:
    link = Link(link)
    y = np.asarray(y, dtype=float)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("binary outcome must be 0/1")
    _rank_check(X, names)
    ybar = y.mean()
    if ybar in (0.0, 1.0):
        g = np.max(np.abs(X.T @ (y - ybar)))
        raise ConvergenceError(
            f"all outcomes equal {int(ybar)}: complete separation, MLE does not exist "
            f"(gradient norm {g:.3e})", grad_norm=float(g))
    beta = np.zeros(X.shape[1])
    beta[0] = math.log(ybar / (1 - ybar)) if link is Link.LOGIT else math.log(ybar)
    ll = glm_loglik(beta, X, y, link)
    for it in range(max_iter + 1):
        score = glm_score(beta, X, y, link)
        gnorm = float(np.max(np.abs(score)))
        if not math.isfinite(gnorm):
            raise StepHalvingError("fitted probabilities reached the boundary of (0, 1)", gnorm)
        if gnorm < tol:
            break
        if it == max_iter:
            raise ConvergenceError(
                f"IRLS did not converge in {max_iter} iterations (gradient norm {gnorm:.3e})", gnorm)
        step = linalg.solve(glm_information(beta, X, link), score, assume_a="pos")
        for _ in range(60):
            cand = beta + step
            ll_c = glm_loglik(cand, X, y, link)
            if np.isfinite(ll_c) and ll_c >= ll - 1e-10 * abs(ll):
                break
            step = step / 2
        else:
            raise StepHalvingError(
                "step halving failed to keep fitted probabilities inside (0, 1)", gnorm)
        beta, ll = cand, ll_c
    eta = X @ beta
    if np.max(np.abs(eta)) > 36 and link is Link.LOGIT:
        raise ConvergenceError("fitted probabilities at 0/1: quasi-complete separation", gnorm)
    cov = linalg.inv(glm_information(beta, X, link))
    return FitResult(list(names), beta, 0.5 * (cov + cov.T), True, it, ll, link, gnorm)


def fit_glm(x, treatment, y, link) -> FitResult:
    link = Link(link)
    if link not in (Link.LOGIT, Link.LOG):
        raise ValueError("fit_glm supports logit and log links")
    X, names = design_matrix(x, treatment)
    return irls(X, y, link, names)


# ---------------------------------------------------------------------------
# Weibull proportional hazards


def weibull_loglik(theta, X, time, event) -> float:
    """Log-likelihood in (beta, log shape) for hazard exp(eta) * nu * t^(nu-1)."""
    beta, nu = theta[:-1], math.exp(theta[-1])
    eta = X @ beta
    lt = np.log(time)
    return float(np.sum(event * (eta + math.log(nu) + (nu - 1) * lt) - np.exp(eta + nu * lt)))


def weibull_score(theta, X, time, event) -> np.ndarray:
    beta, nu = theta[:-1], math.exp(theta[-1])
    lt = np.log(time)
    cum = np.exp(X @ beta + nu * lt)  # cumulative hazard
    g_beta = X.T @ (event - cum)
    g_s = float(np.sum(event * (1 + nu * lt) - cum * nu * lt))
    return np.append(g_beta, g_s)


def weibull_hessian(theta, X, time, event) -> np.ndarray:
    beta, nu = theta[:-1], math.exp(theta[-1])
    lt = np.log(time)
    cum = np.exp(X @ beta + nu * lt)
    p = X.shape[1]
    H = np.empty((p + 1, p + 1))
    H[:p, :p] = -(X * cum[:, None]).T @ X
    H[:p, p] = H[p, :p] = -X.T @ (cum * nu * lt)
    H[p, p] = float(np.sum(event * nu * lt - cum * (nu * lt + (nu * lt) ** 2)))
    return H


def fit_weibull(x, treatment, time, event, tol: float = 1e-8, max_iter: int = 200) -> FitResult:
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=float)
    labels = np.asarray([getattr(t, "value", t) for t in treatment])
    if np.any(time <= 0):
        raise ValueError("survival times must be > 0")
    for arm in np.unique(labels):
        if event[labels == arm].sum() < 1:
            raise ValueError(f"arm {arm} has no events; Weibull model not identifiable")
    X, names = design_matrix(x, labels)
    _rank_check(X, names)
    names = names + ["log_shape"]
    theta = np.zeros(X.shape[1] + 1)
    theta[0] = math.log(event.sum() / time.sum())
    ll = weibull_loglik(theta, X, time, event)
    trace = []
    for it in range(max_iter + 1):
        score = weibull_score(theta, X, time, event)
        gnorm = float(np.max(np.abs(score)))
        trace.append((it, ll, gnorm))
        if gnorm < tol:
            break
        if it == max_iter:
            raise ConvergenceError(
                f"Weibull Newton did not converge in {max_iter} iterations (gradient norm {gnorm:.3e})",
                gnorm, trace[-5:])
        neg_h = -weibull_hessian(theta, X, time, event)
        try:
            step = linalg.solve(neg_h, score, assume_a="pos")
        except linalg.LinAlgError:
            # not locally concave: damp towards gradient ascent
            step = linalg.solve(neg_h + (1.0 + np.abs(np.diag(neg_h)).max()) * np.eye(len(theta)), score)
        for _ in range(60):
            cand = theta + step
            ll_c = weibull_loglik(cand, X, time, event)
            if np.isfinite(ll_c) and ll_c >= ll - 1e-10 * abs(ll):
                break
            step = step / 2
        else:
            raise ConvergenceError("Weibull line search failed", gnorm, trace[-5:])
        theta, ll = cand, ll_c
    cov = linalg.inv(-weibull_hessian(theta, X, time, event))
    return FitResult(names, theta, 0.5 * (cov + cov.T), True, it, ll, Link.LOG_HAZARD_WEIBULL, gnorm)


def fit_model(data, link: Link) -> FitResult:
    """Fit the outcome model matching ``link`` to patient-level ``data`` (a TrialData)."""
    link = Link(link)
    if link is Link.IDENTITY:
        return fit_linear(data.x, data.treatment, data.y)
    if link is Link.LOG_HAZARD_WEIBULL:
        return fit_weibull(data.x, data.treatment, data.time, data.event)
    return fit_glm(data.x, data.treatment, data.y, link)
