"""Nuisance estimation: propensity score, outcome regressions and AIPW means."""

import zlib
from dataclasses import dataclass, field

import numpy as np

from .dataset import EPS_Y, DegenerateDesignError
from .learners import Learner, parse_learner

CLIP_G = 0.01


class NuisanceError(RuntimeError):
    """A learner failed while fitting a nuisance function."""


@dataclass(frozen=True)
class NuisanceConfig:
    """Propensity may be a learner spec, ``known:<p>``, a float, or a callable of ``w``."""

    propensity: object = "logit"
    outcome_mean: object = "ols"
    outcome_sq: object = "ols"
    clip_g: float = CLIP_G
    q2_derived: bool = False

    def __post_init__(self):
        if not 0 < self.clip_g < 0.5:
            raise ValueError(f"clip_g must lie in (0, 0.5), got {self.clip_g}")
        prop = self.propensity
        if isinstance(prop, str) and prop.startswith("known:"):
            prop = float(prop.split(":", 1)[1])
        if isinstance(prop, (int, float)) and not isinstance(prop, bool):
            if not 0 < prop < 1:
                raise ValueError(f"known propensity must lie in (0, 1), got {prop}")
            prop = float(prop)
        elif isinstance(prop, str):
            prop = parse_learner(prop)
        object.__setattr__(self, "propensity", prop)
        for name in ("outcome_mean", "outcome_sq"):
            v = getattr(self, name)
            if isinstance(v, str):
                object.__setattr__(self, name, parse_learner(v))

    @property
    def known_propensity(self):
        return not isinstance(self.propensity, Learner)

    def describe(self):
        prop = self.propensity
        if isinstance(prop, float):
            prop = f"known:{prop:g}"
        elif callable(prop) and not isinstance(prop, Learner):
            prop = "known:function"
        return {"propensity": str(prop), "outcome_mean": str(self.outcome_mean),
                "outcome_sq": str(self.outcome_sq), "clip_g": self.clip_g,
                "q2_derived": self.q2_derived}


@dataclass(frozen=True, eq=False)
class NuisanceFit:
    """Nuisance values on the evaluation rows; column ``a`` of q1/q2 is arm ``a``."""

    g: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    mu: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def clever_covariate(a, g):
    """``h[:, arm] = I(A = arm) / P(A = arm | W)``."""
    a = np.asarray(a)
    g = np.asarray(g, dtype=float)
    h = np.zeros((len(a), 2))
    h[:, 1] = (a == 1) / g
    h[:, 0] = (a == 0) / (1.0 - g)
    return h


def aipw_mean(a, y, g, q1_arm, arm):
    """Doubly robust estimate of the arm-``arm`` counterfactual mean."""
    h = clever_covariate(a, g)[:, arm]
    return float(np.mean(h * (y - q1_arm) + q1_arm))


def _component_seed(seed, *parts):
    key = zlib.crc32("/".join(map(str, parts)).encode())
    return int(np.random.SeedSequence([int(seed), key]).generate_state(1)[0])


def _fit(learner, x, t, seed, cache, key):
    if cache is not None and key in cache:
        return cache[key]
    try:
        model = learner.fit(x, t, seed=seed)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise NuisanceError(f"{key[0]} learner {learner} failed: {exc}") from exc
    if cache is not None:
        cache[key] = model
    return model


def fit_nuisances(d, cfg, train_idx=None, eval_idx=None, seed=0, cache=None, tag="full"):
    """Fit nuisances on ``train_idx`` rows of scaled data ``d``, evaluate on ``eval_idx``.

    ``cache`` (a dict) lets callers share fitted models between configurations
    that use the same learner on the same training rows; ``tag`` identifies
    the training rows within the cache and the seed derivation.
    """
    all_idx = np.arange(d.n)
    train_idx = all_idx if train_idx is None else np.asarray(train_idx)
    eval_idx = all_idx if eval_idx is None else np.asarray(eval_idx)
    if len(train_idx) == 0 or len(eval_idx) == 0:
        raise ValueError("train and eval index sets must be nonempty")
    w_tr, a_tr, y_tr = d.w[train_idx], d.a[train_idx], d.y[train_idx]
    w_ev, a_ev, y_ev = d.w[eval_idx], d.a[eval_idx], d.y[eval_idx]
    for arm in (0, 1):
        if not np.any(a_tr == arm):
            raise DegenerateDesignError(f"training rows ({tag}) contain no arm-{arm} units")

    prop = cfg.propensity
    if isinstance(prop, float):
        g = np.full(len(eval_idx), prop)
    elif isinstance(prop, Learner):
        model = _fit(prop, w_tr, a_tr.astype(float), _component_seed(seed, "g", tag), cache,
                     ("g", str(prop), tag))
        g = model.predict(w_ev)
    else:
        g = np.asarray(prop(w_ev), dtype=float)
    g = np.clip(g, cfg.clip_g, 1.0 - cfg.clip_g)

    q1 = np.empty((len(eval_idx), 2))
    q2 = np.empty((len(eval_idx), 2))
    for arm in (0, 1):
        m = a_tr == arm
        mod1 = _fit(cfg.outcome_mean, w_tr[m], y_tr[m], _component_seed(seed, "q1", arm, tag),
                    cache, ("q1", str(cfg.outcome_mean), arm, tag))
        q1[:, arm] = mod1.predict(w_ev)
        if cfg.q2_derived:
            resid_var = float(np.mean((y_tr[m] - mod1.predict(w_tr[m])) ** 2))
            q2[:, arm] = q1[:, arm] ** 2 + resid_var
        else:
            mod2 = _fit(cfg.outcome_sq, w_tr[m], y_tr[m] ** 2,
                        _component_seed(seed, "q2", arm, tag), cache,
                        ("q2", str(cfg.outcome_sq), arm, tag))
            q2[:, arm] = mod2.predict(w_ev)
    q1 = np.clip(q1, EPS_Y, 1.0 - EPS_Y)
    q2 = np.clip(q2, EPS_Y, 1.0 - EPS_Y)

    mu = np.array([aipw_mean(a_ev, y_ev, g, q1[:, arm], arm) for arm in (0, 1)])
    gap = np.mean(q2 - q1 ** 2, axis=0)
    diagnostics = {"q2_below_q1sq": [bool(gap[0] < 0), bool(gap[1] < 0)]}
    return NuisanceFit(g, q1, q2, mu, diagnostics)
