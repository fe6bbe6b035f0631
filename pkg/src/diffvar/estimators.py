"""One-step and TMLE estimators of the arm variances and of their contrasts."""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from statistics import NormalDist

import numpy as np
from scipy.special import expit, logit

from .dataset import EPS_Y, make_folds, scale_outcome
from .eif import (DegenerateVarianceError, EifVector, eif_lambda, eif_psi, eif_se,
                  eif_sigma2)
from .learners import fit_offset_logistic
from .nuisance import clever_covariate, fit_nuisances

SCHEMA = "diffvar-report/1"
METHODS = ("OS", "TMLE", "CFOS", "CFTMLE")
ESTIMANDS = ("psi", "lambda")
SCORE_CHECK = 1e-6


class TiltError(ArithmeticError):
    """The one-parameter TMLE fluctuation did not converge."""

    def __init__(self, msg, trace=()):
        super().__init__(msg)
        self.trace = trace


class NegativeVarianceError(DegenerateVarianceError):
    pass


@dataclass(frozen=True, eq=False)
class VarianceEstimate:
    arm: int
    method: str
    value_scaled: float
    value_original: float
    eif: EifVector  # scaled-outcome units
    se_original: float
    negative_flagged: bool
    fold_values: tuple = ()
    tilt: tuple = ()  # (eta for q1, eta for q2) per fit

    def summary(self):
        return {"arm": self.arm, "method": self.method, "value_scaled": self.value_scaled,
                "value_original": self.value_original, "se_original": self.se_original,
                "negative_flagged": self.negative_flagged}


def _finish(arm, method, value, eif_vals, span, fold_values=(), tilt=()):
    eif = EifVector(eif_vals, f"sigma2({arm})")
    return VarianceEstimate(
        arm=arm, method=method, value_scaled=float(value),
        value_original=float(max(value, 0.0) * span ** 2),
        eif=eif, se_original=eif_se(eif) * span ** 2,
        negative_flagged=bool(value < 0), fold_values=tuple(fold_values), tilt=tuple(tilt))


def _one_step_parts(a, y, nf, arm):
    q1, q2, mu = nf.q1[:, arm], nf.q2[:, arm], nf.mu[arm]
    h = clever_covariate(a, nf.g)[:, arm]
    value = float(np.mean(h * (y * y - q2 + 2.0 * mu * (q1 - y)) + q2 - 2.0 * q1 * mu) + mu * mu)
    eif = eif_sigma2(a, y, nf.g, q1, q2, mu, value, arm)
    return value, eif.values


def _tmle_parts(a, y, nf, arm, weighted=False):
    q1 = np.clip(nf.q1[:, arm], EPS_Y, 1.0 - EPS_Y)
    q2 = np.clip(nf.q2[:, arm], EPS_Y, 1.0 - EPS_Y)
    h = clever_covariate(a, nf.g)[:, arm]
    # the fit only sees arm rows (h = 0 elsewhere); the counterfactual
    # prediction for every row uses 1 / P(A = arm | W)
    h_cf = 1.0 / (nf.g if arm == 1 else 1.0 - nf.g)
    tilted, etas = [], []
    for q, target in ((q1, y), (q2, y * y)):
        off = logit(q)
        if weighted:
            fit = fit_offset_logistic(np.ones_like(h), off, target, weights=h)
            cov = np.ones_like(h)
        else:
            fit = fit_offset_logistic(h, off, target)
            cov = h_cf
        if not fit.converged:
            raise TiltError(f"TMLE tilt for arm {arm} did not converge "
                            f"(eta={fit.eta:.4g}, score={fit.score:.3g})", fit.trace)
        etas.append(fit.eta)
        tilted.append(expit(off + fit.eta * cov))
    q1s, q2s = tilted
    mu = float(np.mean(q1s))
    value = float(np.mean(q2s) - mu * mu)
    eif = eif_sigma2(a, y, nf.g, q1s, q2s, mu, value, arm)
    if abs(eif.mean()) > SCORE_CHECK:
        raise TiltError(f"tilted fit leaves an influence-function mean of {eif.mean():.3g}")
    return value, eif.values, tuple(etas)


def one_step_sigma2(d, nf, arm, span=1.0):
    """One-step variance of arm ``arm`` on scaled data ``d`` with nuisances ``nf``."""
    value, eif = _one_step_parts(d.a, d.y, nf, arm)
    return _finish(arm, "OS", value, eif, span)


def tmle_sigma2(d, nf, arm, span=1.0, weighted=False):
    """Targeted plug-in variance after tilting both outcome regressions."""
    value, eif, etas = _tmle_parts(d.a, d.y, nf, arm, weighted)
    return _finish(arm, "TMLE", value, eif, span, tilt=(etas,))


def cross_fit(d, cfg, k, seed, methods=("CFOS", "CFTMLE"), span=1.0, cache=None,
              weighted=False, folds=None):
    """K-fold cross-fitted estimates; returns ``{method: (arm0, arm1)}``.

    Nuisances for fold ``j`` are trained on the other folds; every estimator
    and its influence values are evaluated on fold ``j`` and combined with
    weights ``n_j / n``.
    """
    if folds is None:
        folds = make_folds(d, k, seed)
    k = folds.k
    n = d.n
    out = {m: {arm: [np.empty(n), [], []] for arm in (0, 1)} for m in methods}
    for j in range(k):
        ev = folds.indices(j)
        nf = fit_nuisances(d, cfg, folds.complement(j), ev, seed=seed, cache=cache,
                           tag=f"k{k}s{seed}f{j}")
        a, y = d.a[ev], d.y[ev]
        for m in methods:
            for arm in (0, 1):
                if m == "CFOS":
                    v, e = _one_step_parts(a, y, nf, arm)
                    etas = ()
                elif m == "CFTMLE":
                    try:
                        v, e, etas = _tmle_parts(a, y, nf, arm, weighted)
                    except TiltError as exc:
                        raise TiltError(f"fold {j}: {exc}", exc.trace) from exc
                else:
                    raise ValueError(f"unknown cross-fitted method {m!r}")
                slot = out[m][arm]
                slot[0][ev] = e
                slot[1].append(v)
                slot[2].append(etas)
    sizes = np.array([len(folds.indices(j)) for j in range(k)])
    res = {}
    for m in methods:
        pair = []
        for arm in (0, 1):
            eif, vals, etas = out[m][arm]
            value = float(np.sum(sizes / n * np.array(vals)))
            pair.append(_finish(arm, m, value, eif, span, vals, etas))
        res[m] = tuple(pair)
    return res


def estimate_arms(ds, cfg, methods, k=5, seed=0, span=1.0, cache=None, weighted=False):
    """Per-arm variance estimates for several methods, sharing nuisance fits."""
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ValueError(f"unknown method(s) {bad}")
    res = {}
    full = [m for m in methods if m in ("OS", "TMLE")]
    if full:
        nf = fit_nuisances(ds, cfg, seed=seed, cache=cache, tag="full")
        for m in full:
            if m == "OS":
                res[m] = tuple(one_step_sigma2(ds, nf, arm, span) for arm in (0, 1))
            else:
                res[m] = tuple(tmle_sigma2(ds, nf, arm, span, weighted) for arm in (0, 1))
    cf = [m for m in methods if m in ("CFOS", "CFTMLE")]
    if cf:
        res.update(cross_fit(ds, cfg, k, seed, cf, span, cache, weighted))
    return {m: res[m] for m in methods}


def _z(alpha):
    return NormalDist().inv_cdf(1.0 - alpha / 2.0)


def wald(estimate, se, null, alpha):
    z = _z(alpha)
    lo, hi = estimate - z * se, estimate + z * se
    if se > 0:
        p = 2.0 * (1.0 - NormalDist().cdf(abs(estimate - null) / se))
    else:
        p = 1.0 if estimate == null else 0.0
    return lo, hi, min(max(p, 0.0), 1.0)


@dataclass(frozen=True)
class ContrastReport:
    estimand: str
    method: str
    estimate: float
    se: float
    ci_low: float
    ci_high: float
    alpha: float
    p_value: float
    null: float
    n: int
    k: int | None
    seed: int
    arms: tuple
    config: dict
    fingerprint: str
    schema: str = SCHEMA
    variance_estimates: tuple = field(default=(), compare=False, repr=False)

    def covers(self, value):
        return self.ci_low <= value <= self.ci_high

    def to_dict(self):
        d = asdict(self)
        d.pop("variance_estimates")
        d["arms"] = [dict(x) for x in self.arms]
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported report schema {d.get('schema')!r}")
        d = dict(d)
        d["arms"] = tuple(dict(x) for x in d["arms"])
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def fingerprint(config):
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def contrast_report(v0, v1, estimand, alpha=0.05, span=1.0, config=None, seed=0, k=None):
    """Combine two arm estimates into a Psi (sd difference) or Lambda (ratio) report."""
    method = v1.method
    s1, s0 = v1.value_scaled, v0.value_scaled
    if estimand == "psi":
        for v in (v1, v0):
            if v.value_scaled < 0:
                hint = " (use a TMLE-based method, which is bounded)" if "OS" in method else ""
                raise NegativeVarianceError(
                    f"{method} variance of arm {v.arm} is negative ({v.value_scaled:.3g}){hint}")
        infl = eif_psi(v1.eif, v0.eif, s1, s0)
        estimate = span * (np.sqrt(s1) - np.sqrt(s0))
        se = span * eif_se(infl)
        null = 0.0
    elif estimand == "lambda":
        if s0 < 0:
            raise NegativeVarianceError(
                f"{method} variance of the control arm is negative ({s0:.3g})")
        infl = eif_lambda(v1.eif, v0.eif, s1, s0)
        estimate = s1 / s0
        se = eif_se(infl)
        null = 1.0
    else:
        raise ValueError(f"estimand must be 'psi' or 'lambda', got {estimand!r}")
    lo, hi, p = wald(float(estimate), se, null, alpha)
    config = dict(config or {})
    return ContrastReport(
        estimand=estimand, method=method, estimate=float(estimate), se=float(se),
        ci_low=float(lo), ci_high=float(hi), alpha=alpha, p_value=float(p), null=null,
        n=len(v1.eif), k=k, seed=seed, arms=(v0.summary(), v1.summary()),
        config=config, fingerprint=fingerprint(config), variance_estimates=(v0, v1))


def estimate_contrasts(d, cfg, methods=METHODS, estimands=("psi",), alpha=0.05, k=5, seed=0,
                       cache=None, weighted=False):
    """Reports for every (method, estimand); failures are returned as exceptions.

    ``d`` is on the original outcome scale; scaling happens here.
    """
    ds, scaling = scale_outcome(d)
    cache = {} if cache is None else cache
    arms = {}
    out = {}
    for m in methods:
        try:
            arms.update(estimate_arms(ds, cfg, [m], k, seed, scaling.span, cache, weighted))
        except (ArithmeticError, RuntimeError, ValueError) as exc:
            for est in estimands:
                out[(m, est)] = exc
    for m, (v0, v1) in arms.items():
        kk = k if m.startswith("CF") else None
        conf = {**cfg.describe(), "method": m, "k": kk, "alpha": alpha,
                "weighted_tmle": weighted, "y_min": scaling.y_min, "y_max": scaling.y_max}
        for est in estimands:
            try:
                out[(m, est)] = contrast_report(v0, v1, est, alpha, scaling.span,
                                                {**conf, "estimand": est}, seed, kk)
            except ArithmeticError as exc:
                out[(m, est)] = exc
    return out


def estimate_contrast(d, cfg, method="TMLE", estimand="psi", alpha=0.05, k=5, seed=0,
                      weighted=False):
    method = method.upper()
    res = estimate_contrasts(d, cfg, [method], [estimand], alpha, k, seed, cache={},
                             weighted=weighted)[(method, estimand)]
    if isinstance(res, Exception):
        raise res
    return res
