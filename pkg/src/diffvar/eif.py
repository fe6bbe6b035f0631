"""Efficient influence functions of the arm variances and their contrasts."""

from dataclasses import dataclass

import numpy as np

from .nuisance import clever_covariate

VARIANCE_FLOOR = 1e-10


class DegenerateVarianceError(ArithmeticError):
    """A variance in a delta-method denominator is at or below the floor."""


@dataclass(frozen=True, eq=False)
class EifVector:
    values: np.ndarray
    estimand: str  # "sigma2(0)", "sigma2(1)", "psi", "lambda"

    def mean(self):
        return float(np.mean(self.values))

    def __len__(self):
        return len(self.values)


def eif_sigma2(a, y, g, q1_arm, q2_arm, mu, sigma2, arm):
    """Influence values of the arm-``arm`` outcome variance at the given nuisances."""
    h = clever_covariate(a, g)[:, arm]
    y = np.asarray(y, dtype=float)
    vals = (h * (y * y - q2_arm + 2.0 * mu * (q1_arm - y))
            + q2_arm - 2.0 * q1_arm * mu + mu * mu - sigma2)
    return EifVector(vals, f"sigma2({arm})")


def _check(s2, which):
    if not s2 > VARIANCE_FLOOR:
        raise DegenerateVarianceError(
            f"estimated variance of arm {which} is {s2:.3g} (<= {VARIANCE_FLOOR:g}); "
            "report the per-arm variances instead of the contrast")


def eif_psi(eif1, eif0, s2_1, s2_0):
    _check(s2_1, 1)
    _check(s2_0, 0)
    vals = eif1.values / (2.0 * np.sqrt(s2_1)) - eif0.values / (2.0 * np.sqrt(s2_0))
    return EifVector(vals, "psi")


def eif_lambda(eif1, eif0, s2_1, s2_0):
    _check(s2_0, 0)
    vals = eif1.values / s2_0 - s2_1 * eif0.values / s2_0 ** 2
    return EifVector(vals, "lambda")


def eif_se(e, n_total=None):
    vals = e.values if isinstance(e, EifVector) else np.asarray(e, dtype=float)
    n = len(vals) if n_total is None else n_total
    return float(np.sqrt(np.mean(vals ** 2) / n))


def cross_fit_se(folds, n_total=None):
    """Pooled standard error over per-fold influence vectors (divides by total n)."""
    vals = [f.values if isinstance(f, EifVector) else np.asarray(f, dtype=float) for f in folds]
    n = sum(len(v) for v in vals) if n_total is None else n_total
    return float(np.sqrt(sum(float(np.sum(v ** 2)) for v in vals) / n / n))
