"""Weighted logistic regression and linear discriminant scorers."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import DataError
from .base import Scorer, TargetKind

__all__ = ["logistic_loss_grad", "fit_logistic", "LinearScorer", "fit_lda"]


def logistic_loss_grad(theta, X, y, w, l2: float = 0.0):
    """Weighted logistic loss and gradient.

    theta = [intercept, coefficients]; loss is the weight-normalized negative
    log-likelihood plus an L2 penalty on the coefficients (intercept excluded).
    """
    theta = np.asarray(theta, dtype=float)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    W = w.sum()
    z = theta[0] + X @ theta[1:]
    # log(1 + e^z) - y z, stable for large |z|
    loss = float(np.sum(w * (np.logaddexp(0.0, z) - y * z)) / W)
    loss += 0.5 * l2 * float(theta[1:] @ theta[1:])
    p = expit(z)
    r = w * (p - y) / W
    grad = np.concatenate(([r.sum()], X.T @ r))
    grad[1:] += l2 * theta[1:]
    return loss, grad


def _logistic_hessian(theta, X, y, w, l2):
    z = theta[0] + X @ theta[1:]
    p = expit(z)
    W = w.sum()
    s = w * p * (1.0 - p) / W
    X1 = np.concatenate([np.ones((len(X), 1)), X], axis=1)
    H = X1.T @ (X1 * s[:, None])
    H[1:, 1:] += l2 * np.eye(X.shape[1])
    return H


def fit_logistic(X, y, w, l2: float = 1e-4, max_iter: int = 100, tol: float = 1e-9):
    """Newton fit with step halving; returns theta = [intercept, coef]."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    theta = np.zeros(d + 1)
    loss, grad = logistic_loss_grad(theta, X, y, w, l2)
    for _ in range(max_iter):
        if np.linalg.norm(grad, np.inf) < tol:
            break
        H = _logistic_hessian(theta, X, y, w, l2)
        try:
            step = np.linalg.solve(H + 1e-12 * np.eye(d + 1), grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        for _ in range(40):
            cand = theta - t * step
            new_loss, new_grad = logistic_loss_grad(cand, X, y, w, l2)
            if new_loss <= loss + 1e-15:
                theta, loss, grad = cand, new_loss, new_grad
                break
            t *= 0.5
        else:
            break
    return theta


class LinearScorer(Scorer):
    """Linear score passed through a logistic link (classification) or raw."""

    def __init__(self, family, target_kind, intercept, coef, link="logistic"):
        super().__init__(target_kind, len(coef))
        self.family = family
        self.intercept = float(intercept)
        self.coef = np.asarray(coef, dtype=float)
        self.link = link

    def score_features(self, X):
        z = self.intercept + X @ self.coef
        return expit(z) if self.link == "logistic" else z

    def decision_values(self, X):
        return self.intercept + X @ self.coef

    def _params_dict(self):
        return {
            "intercept": self.intercept,
            "coef": self.coef.tolist(),
            "link": self.link,
        }

    @classmethod
    def _from_params(cls, family, target_kind, params):
        return cls(family, target_kind, params["intercept"], np.array(params["coef"]), params["link"])


def fit_lda(X, y, w, shrinkage: float = 1e-8, target_kind: TargetKind | None = None) -> LinearScorer:
    """Two-class linear discriminant with pooled weighted covariance.

    The score is the Gaussian posterior probability of the positive class,
    which for equal covariances is a logistic function of a linear score.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    d = X.shape[1]
    masks = [y <= 0.5, y > 0.5]
    W = w.sum()
    means, priors = [], []
    cov = np.zeros((d, d))
    for m in masks:
        wc = w[m]
        Wc = wc.sum()
        if Wc <= 0:
            raise DataError("linear discriminant needs both classes present")
        mu = (X[m] * wc[:, None]).sum(axis=0) / Wc
        centered = X[m] - mu
        cov += centered.T @ (centered * wc[:, None])
        means.append(mu)
        priors.append(Wc / W)
    cov /= W
    cov += shrinkage * (np.trace(cov) / d + 1e-30) * np.eye(d)
    coef = np.linalg.solve(cov, means[1] - means[0])
    intercept = -0.5 * float((means[1] + means[0]) @ coef) + float(np.log(priors[1] / priors[0]))
    return LinearScorer("linear_discriminant", target_kind or TargetKind.classification(), intercept, coef)
