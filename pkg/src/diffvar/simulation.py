"""Simulation designs, their true contrasts, and the Monte Carlo engine."""

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .dataset import Dataset
from .estimators import METHODS, estimate_contrasts
from .nuisance import NuisanceConfig

log = logging.getLogger(__name__)

DESK_NS = (125, 250, 500, 1000)
FULL_NS = (125, 250, 500, 1000, 2000)
DESK_REPS = 200
FULL_REPS = 500


@dataclass(frozen=True)
class DgpSpec:
    study: int
    n: int
    m: float = 0.0  # study 3: probability the effect modifier is replaced by noise
    seed: int = 0

    def __post_init__(self):
        if self.study not in (1, 2, 3):
            raise ValueError(f"study must be 1, 2 or 3, got {self.study}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 0.0 <= self.m <= 1.0:
            raise ValueError(f"m must lie in [0, 1], got {self.m}")


@dataclass(frozen=True)
class TruthValues:
    lambda0: float
    psi0: float
    source: str = "closed_form"
    lambda_se: float = 0.0
    psi_se: float = 0.0


def _potential_means(study, rng, n):
    """Conditional means of Y(0), Y(1), the residual sds, and the observed covariates."""
    if study == 1:
        w1 = rng.binomial(1, 0.3, n).astype(float)
        w2 = rng.normal(size=n)
        base = 1.0 + w1 + w2 + w1 * w2
        f0, f1 = base, base + 1.0 + w2
        sd0, sd1 = 1.0, math.sqrt(2.0)
        return f0, f1, sd0, sd1, np.column_stack([w1, w2]), expit((1.0 + w1 + w2) / 4.0)
    w1 = rng.normal(size=n)
    w2 = rng.normal(size=n)
    f0 = 1.0 + w1 ** 2 + 2.0 * (w2 < 0)
    if study == 2:
        return f0, f0 - 2.0, 1.0, 1.0, np.column_stack([w1, w2]), expit((1.0 + w1 + w2) / 4.0)
    v = rng.binomial(1, 0.5, n).astype(float)
    return f0, f0 - 2.0 + 4.0 * v, 1.0, 1.0, (w1, w2, v), np.full(n, 0.5)


def draw(spec):
    """One observed dataset from the study's data-generating law."""
    rng = np.random.default_rng(spec.seed)
    f0, f1, sd0, sd1, cov, g = _potential_means(spec.study, rng, spec.n)
    if spec.study == 3:
        w1, w2, v = cov
        mis = rng.binomial(1, spec.m, spec.n)
        u = rng.binomial(1, 0.2, spec.n).astype(float)
        v_obs = np.where(mis == 1, u, v)
        cov = np.column_stack([w1, w2, v_obs])
    a = rng.binomial(1, g)
    noise = rng.normal(size=spec.n)
    y = np.where(a == 1, f1 + sd1 * noise, f0 + sd0 * noise)
    names = ("W1", "W2", "V_obs") if spec.study == 3 else ("W1", "W2")
    return Dataset(cov, a, y, names)


def true_propensity(study):
    """Known propensity score as a function of the observed covariates."""
    if study == 3:
        return lambda w: np.full(len(w), 0.5)
    return lambda w: expit((1.0 + w[:, 0] + w[:, 1]) / 4.0)


def truth(spec):
    if spec.study == 1:
        # Var f1 = Var W1 + E(2 + W1)^2 + 2, Var f0 = Var W1 + E(1 + W1)^2 + 1
        v1 = 0.21 + (4.0 + 4.0 * 0.3 + 0.3) + 2.0
        v0 = 0.21 + (1.0 + 2.0 * 0.3 + 0.3) + 1.0
    elif spec.study == 2:
        v1 = v0 = 2.0 + 1.0 + 1.0  # Var W1^2 + Var 2I(W2<0) + noise
    else:
        v1, v0 = 2.0 + 1.0 + 4.0 + 1.0, 2.0 + 1.0 + 1.0  # + Var 4V in the treated arm
    return TruthValues(v1 / v0, math.sqrt(v1) - math.sqrt(v0))


def monte_carlo_truth(study, n_oracle=10_000_000, seed=20240601, batches=20):
    """Contrasts from simulated potential outcomes, with batch-means standard errors."""
    rng = np.random.default_rng(seed)
    size = n_oracle // batches
    lam, psi = [], []
    for _ in range(batches):
        f0, f1, sd0, sd1, _, _ = _potential_means(study, rng, size)
        y0 = f0 + sd0 * rng.normal(size=size)
        y1 = f1 + sd1 * rng.normal(size=size)
        v0, v1 = y0.var(), y1.var()
        lam.append(v1 / v0)
        psi.append(math.sqrt(v1) - math.sqrt(v0))
    lam, psi = np.array(lam), np.array(psi)
    return TruthValues(float(lam.mean()), float(psi.mean()), f"monte_carlo({n_oracle},{seed})",
                       float(lam.std(ddof=1) / math.sqrt(batches)),
                       float(psi.std(ddof=1) / math.sqrt(batches)))


# ---------------------------------------------------------------------------
# scenarios

STUDY2_FOREST = "forest(trees=100)"


def scenarios(study, m=0.0):
    """Named nuisance configurations for each study."""
    if study == 1:
        g_ok, g_bad = "logit", "logit(cols=1)"
        q_ok, q_bad = "forest", "mean"
        return {
            "all-correct": NuisanceConfig(g_ok, q_ok, q_ok),
            "g-correct": NuisanceConfig(g_ok, q_bad, q_bad),
            "q-correct": NuisanceConfig(g_bad, q_ok, q_ok),
            "all-misspecified": NuisanceConfig(g_bad, q_bad, q_bad),
        }
    if study == 2:
        f = STUDY2_FOREST
        return {"super-learner": NuisanceConfig(
            f"stack(logit,logit2,{f})", f"stack(ols,ols2,{f})", f"stack(ols2,{f})")}
    return {f"linear-m{m:g}": NuisanceConfig("known:0.5", "ols", "ols")}


def default_estimand(study):
    return "lambda" if study == 1 else "psi"


# ---------------------------------------------------------------------------
# engine


@dataclass(frozen=True)
class SimulationSummary:
    rows: list
    raw: list = field(default_factory=list, compare=False, repr=False)

    def row(self, scenario, estimator, n):
        for r in self.rows:
            if r["scenario"] == scenario and r["estimator"] == estimator and r["n"] == n:
                return r
        raise KeyError((scenario, estimator, n))


SUMMARY_FIELDS = ("study", "scenario", "estimator", "estimand", "n", "truth", "abs_bias",
                  "emp_variance", "scaled_abs_bias", "coverage", "power", "n_reps",
                  "n_failures")
RAW_FIELDS = ("study", "scenario", "estimator", "estimand", "n", "rep", "estimate", "se",
              "ci_low", "ci_high", "p_value", "truth", "covered", "error")


def replicate_seeds(seed, study, n, rep):
    """Counter-based seeds for one replicate: (data seed, estimation seed)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(study), int(n), int(rep)))
    data, est = ss.generate_state(2)
    return int(data), int(est)


def _run_replicate(task):
    study, n, rep, m, seed, methods, scen_names, k, alpha, estimand = task
    data_seed, est_seed = replicate_seeds(seed, study, n, rep)
    d = draw(DgpSpec(study, n, m, data_seed))
    tv = truth(DgpSpec(study, n, m))
    target = tv.lambda0 if estimand == "lambda" else tv.psi0
    all_scen = scenarios(study, m)
    cache = {}
    rows = []
    for name in scen_names:
        res = estimate_contrasts(d, all_scen[name], methods, [estimand], alpha, k, est_seed,
                                 cache=cache)
        for meth in methods:
            r = res[(meth, estimand)]
            row = {"study": study, "scenario": name, "estimator": meth, "estimand": estimand,
                   "n": n, "rep": rep, "truth": target}
            if isinstance(r, Exception):
                row.update(estimate=math.nan, se=math.nan, ci_low=math.nan, ci_high=math.nan,
                           p_value=math.nan, covered="", error=f"{type(r).__name__}: {r}")
            else:
                row.update(estimate=r.estimate, se=r.se, ci_low=r.ci_low, ci_high=r.ci_high,
                           p_value=r.p_value, covered=int(r.covers(target)), error="")
            rows.append(row)
    return rows


def summarize(raw, alpha=0.05):
    groups = {}
    for r in raw:
        key = (r["study"], r["scenario"], r["estimator"], r["estimand"], r["n"])
        groups.setdefault(key, []).append(r)
    rows = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], METHODS.index(k[2])
                                             if k[2] in METHODS else 99, k[3], k[4])):
        grp = sorted(groups[key], key=lambda r: r["rep"])
        ok = [r for r in grp if not r["error"]]
        est = np.array([r["estimate"] for r in ok])
        truth_v = grp[0]["truth"]
        n = key[4]
        if len(ok):
            bias = abs(float(est.mean()) - truth_v)
            var = float(est.var(ddof=1)) if len(ok) > 1 else math.nan
            cov = float(np.mean([r["covered"] for r in ok]))
            power = float(np.mean([r["p_value"] < alpha for r in ok]))
        else:
            bias = var = cov = power = math.nan
        rows.append({"study": key[0], "scenario": key[1], "estimator": key[2],
                     "estimand": key[3], "n": n, "truth": truth_v, "abs_bias": bias,
                     "emp_variance": var, "scaled_abs_bias": math.sqrt(n) * bias,
                     "coverage": cov, "power": power, "n_reps": len(grp),
                     "n_failures": len(grp) - len(ok)})
    return rows


def run_study(study, estimators=METHODS, ns=DESK_NS, reps=DESK_REPS, scenario=None, m=0.0,
              seed=0, workers=1, k=5, alpha=0.05, estimand=None, progress=False):
    """Monte Carlo replication of one study over ``ns`` and ``reps`` replicates.

    Results do not depend on ``workers``: each replicate draws its data and
    learner seeds from a seed sequence keyed by (seed, study, n, rep).
    """
    estimators = tuple(e.upper() for e in estimators)
    bad = [e for e in estimators if e not in METHODS]
    if bad:
        raise ValueError(f"unknown estimator(s) {bad}; choose from {METHODS}")
    all_scen = scenarios(study, m)
    if scenario is None:
        scen_names = tuple(all_scen)
    else:
        scen_names = tuple(scenario) if isinstance(scenario, (list, tuple)) else (scenario,)
        unknown = [s for s in scen_names if s not in all_scen]
        if unknown:
            raise ValueError(f"unknown scenario(s) {unknown}; study {study} has {list(all_scen)}")
    DgpSpec(study, 2, m)  # validates study and m
    estimand = estimand or default_estimand(study)
    tasks = [(study, n, rep, m, seed, estimators, scen_names, k, alpha, estimand)
             for n in ns for rep in range(reps)]
    t0 = time.time()
    raw = []
    if workers <= 1:
        for i, task in enumerate(tasks):
            raw.extend(_run_replicate(task))
            if progress and (i + 1) % max(1, len(tasks) // 20) == 0:
                log.info("study %d: %d/%d replicates (%.0fs)", study, i + 1, len(tasks),
                         time.time() - t0)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rows in pool.map(_run_replicate, tasks, chunksize=max(1, len(tasks) // (8 * workers))):
                raw.extend(rows)
    return SimulationSummary(summarize(raw, alpha), raw)


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(path, rows, fields):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(fields)
        for r in rows:
            wr.writerow([_fmt(r[f]) for f in fields])


def read_summary_csv(path):
    ints = {"study", "n", "n_reps", "n_failures"}
    text = {"scenario", "estimator", "estimand"}
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: (v if k in text else int(v) if k in ints else float(v))
                 for k, v in r.items()} for r in csv.DictReader(fh)]
