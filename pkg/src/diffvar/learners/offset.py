"""One-parameter logistic regression with a fixed offset (the TMLE tilt)."""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

MAX_NEWTON = 50
SCORE_TOL = 1e-8  # per observation
ETA_BRACKET = 20.0


@dataclass(frozen=True)
class OffsetLogisticFit:
    eta: float
    iterations: int
    converged: bool
    score: float
    trace: tuple = ()


def _score(eta, h, offset, t, w):
    return float(np.sum(w * h * (t - expit(offset + eta * h))))


def _loglik(eta, h, offset, t, w):
    x = offset + eta * h
    return float(np.sum(w * (t * x - np.logaddexp(0.0, x))))


def fit_offset_logistic(h, offset, targets, tol=None, weights=None):
    """Maximum-likelihood slope of ``targets ~ h`` with ``offset`` fixed.

    Newton steps with step halving; falls back to bisection on the (monotone)
    score over ``[-20, 20]`` when Newton does not reach the tolerance.
    Optional nonnegative ``weights`` give the weighted-likelihood variant.
    """
    h = np.asarray(h, dtype=float)
    offset = np.asarray(offset, dtype=float)
    t = np.asarray(targets, dtype=float)
    w = np.ones_like(t) if weights is None else np.asarray(weights, dtype=float)
    if not np.all(np.isfinite(offset)):
        raise ValueError("offset contains non-finite values")
    if np.any(h < 0) or np.any(w < 0):
        raise ValueError("clever covariate and weights must be nonnegative")
    if tol is None:
        tol = SCORE_TOL * len(t)
    # rows with h == 0 or zero weight do not move the likelihood
    keep = (h > 0) & (w > 0)
    h, offset, t, w = h[keep], offset[keep], t[keep], w[keep]

    eta = 0.0
    s = _score(eta, h, offset, t, w)
    trace = [(0, eta, s)]
    if abs(s) <= tol:
        return OffsetLogisticFit(0.0, 0, True, s, tuple(trace))
    ll = _loglik(eta, h, offset, t, w)
    for it in range(1, MAX_NEWTON + 1):
        p = expit(offset + eta * h)
        info = float(np.sum(w * h * h * p * (1.0 - p)))
        if not info > 0:
            break
        step = s / info
        for _ in range(40):
            cand = eta + step
            cand_ll = _loglik(cand, h, offset, t, w)
            if cand_ll >= ll:
                break
            step /= 2.0
        else:
            break
        eta, ll = cand, cand_ll
        s = _score(eta, h, offset, t, w)
        trace.append((it, eta, s))
        if abs(s) <= tol:
            return OffsetLogisticFit(eta, it, True, s, tuple(trace))
        if abs(eta) > ETA_BRACKET:
            break

    # bisection fallback; the score is decreasing in eta because h >= 0
    lo, hi = -ETA_BRACKET, ETA_BRACKET
    s_lo, s_hi = _score(lo, h, offset, t, w), _score(hi, h, offset, t, w)
    if s_lo < 0 or s_hi > 0:
        return OffsetLogisticFit(eta, len(trace), False, s, tuple(trace))
    for it in range(200):
        mid = 0.5 * (lo + hi)
        s_mid = _score(mid, h, offset, t, w)
        trace.append((len(trace), mid, s_mid))
        if abs(s_mid) <= tol:
            return OffsetLogisticFit(mid, len(trace), True, s_mid, tuple(trace))
        if s_mid > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return OffsetLogisticFit(mid, len(trace), abs(s_mid) <= tol, s_mid, tuple(trace))
