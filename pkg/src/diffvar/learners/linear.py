"""Mean, least-squares and logistic (IRLS) learners."""

import warnings

import numpy as np
from scipy.special import expit

EPS_PROB = 1e-3

IRLS_MAX_ITER = 100
IRLS_TOL = 1e-10
COEF_CAP = 30.0
RIDGE_SCALE = 1e-8


class RankError(ValueError):
    """Design matrix has fewer rows than columns and no ridge guard."""


def design_matrix(features, degree=1):
    """Intercept + main terms, plus squares and pairwise products for degree 2."""
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, p = x.shape
    cols = [np.ones(n), *(x[:, j] for j in range(p))]
    if degree == 2:
        for j in range(p):
            for k in range(j, p):
                cols.append(x[:, j] * x[:, k])
    elif degree != 1:
        raise ValueError(f"degree must be 1 or 2, got {degree}")
    return np.column_stack(cols)


def _ridge_solve(xtx, xty):
    lam = RIDGE_SCALE * max(np.trace(xtx) / xtx.shape[0], 1.0)
    return np.linalg.solve(xtx + lam * np.eye(xtx.shape[0]), xty)


def _least_squares(xd, y, weights=None, ridge=True):
    n, k = xd.shape
    if n < k and not ridge:
        raise RankError(f"{n} rows for {k} columns")
    if weights is not None:
        sw = np.sqrt(weights)
        xd = xd * sw[:, None]
        y = y * sw
    coef, _, rank, _ = np.linalg.lstsq(xd, y, rcond=None)
    if rank < k:
        if not ridge:
            raise RankError(f"design has rank {rank} < {k}")
        coef = _ridge_solve(xd.T @ xd, xd.T @ y)
    return coef


class MeanModel:
    def __init__(self, mean):
        self.mean = float(mean)

    def predict(self, features):
        return np.full(len(features), self.mean)


def fit_mean(targets):
    targets = np.asarray(targets, dtype=float)
    if targets.size == 0:
        raise ValueError("cannot fit a mean to zero targets")
    return MeanModel(targets.mean())


class LinearModel:
    def __init__(self, coef, degree):
        self.coef = coef
        self.degree = degree

    def predict(self, features):
        return design_matrix(features, self.degree) @ self.coef


def fit_ols(features, targets, degree=1, ridge=True):
    xd = design_matrix(features, degree)
    y = np.asarray(targets, dtype=float)
    return LinearModel(_least_squares(xd, y, ridge=ridge), degree)


class LogisticModel:
    def __init__(self, coef, degree, iterations, converged, separated):
        self.coef = coef
        self.degree = degree
        self.iterations = iterations
        self.converged = converged
        self.separated = separated

    def predict(self, features):
        p = expit(design_matrix(features, self.degree) @ self.coef)
        return np.clip(p, EPS_PROB, 1.0 - EPS_PROB)


def _deviance(t, eta):
    # -2 * Bernoulli log-likelihood, valid for fractional targets
    return 2.0 * np.sum(np.logaddexp(0.0, eta) - t * eta)


def fit_logistic_irls(features, targets, degree=1, ridge=True):
    """Logistic regression by iteratively reweighted least squares.

    Coefficients are capped at ``COEF_CAP`` in absolute value; hitting the cap
    marks the fit as separated but predictions are still returned (clipped).
    """
    xd = design_matrix(features, degree)
    t = np.asarray(targets, dtype=float)
    if np.any((t < 0) | (t > 1)):
        raise ValueError("logistic targets must lie in [0, 1]")
    beta = np.zeros(xd.shape[1])
    eta = xd @ beta
    dev = _deviance(t, eta)
    converged = separated = False
    it = 0
    for it in range(1, IRLS_MAX_ITER + 1):
        p = expit(eta)
        w = np.maximum(p * (1.0 - p), 1e-12)
        z = eta + (t - p) / w
        new = _least_squares(xd, z, weights=w, ridge=ridge)
        if np.any(np.abs(new) > COEF_CAP):
            separated = True
            new = np.clip(new, -COEF_CAP, COEF_CAP)
        step = new - beta
        for _ in range(30):
            cand = beta + step
            new_dev = _deviance(t, xd @ cand)
            if new_dev <= dev + 1e-12 * abs(dev):
                break
            step = step / 2.0
        beta = cand
        eta = xd @ beta
        change = abs(dev - new_dev)
        dev = new_dev
        if change < IRLS_TOL * (abs(dev) + 0.1) or change < IRLS_TOL:
            converged = True
            break
    # a near-zero deviance means the classes are (quasi-)separated even if
    # the coefficients stopped short of the cap
    separated = separated or dev < 1e-6 * len(t)
    if separated:
        warnings.warn("logistic fit hit the coefficient cap (separation)", RuntimeWarning,
                      stacklevel=2)
    return LogisticModel(beta, degree, it, converged, separated)
