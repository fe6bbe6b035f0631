"""Nuisance learners and the learner-spec mini-language.

Specs are strings such as ``ols2``, ``logit(cols=1)``,
``forest(trees=100,max_depth=6)`` or ``stack(ols,ols2,forest,cv=5)``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .forest import ForestModel, ForestParams, fit_forest
from .linear import (EPS_PROB, LinearModel, LogisticModel, MeanModel, RankError,
                     design_matrix, fit_logistic_irls, fit_mean, fit_ols)
from .offset import OffsetLogisticFit, fit_offset_logistic
from .stacking import StackedModel, fit_stacking, simplex_weights

__all__ = [
    "EPS_PROB", "ForestModel", "ForestParams", "Learner", "LinearModel", "LogisticModel",
    "MeanModel", "OffsetLogisticFit", "RankError", "StackedModel", "design_matrix",
    "fit_forest", "fit_logistic_irls", "fit_mean", "fit_offset_logistic", "fit_ols",
    "fit_stacking", "parse_learner", "simplex_weights",
]


class _ColumnModel:
    def __init__(self, model, cols):
        self.model = model
        self.cols = cols

    def predict(self, features):
        return self.model.predict(_select(features, self.cols))


def _select(features, cols):
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x if cols is None else x[:, list(cols)]


@dataclass(frozen=True)
class Learner:
    """A learner recipe; ``fit`` returns a model exposing ``predict``."""

    kind: str  # mean | ols | logit | forest | stack
    degree: int = 1
    cols: tuple | None = None
    forest: ForestParams = field(default_factory=ForestParams)
    base: tuple = ()
    cv: int = 5

    def fit(self, features, targets, seed=0):
        x = _select(features, self.cols)
        if self.kind == "mean":
            model = fit_mean(targets)
        elif self.kind == "ols":
            model = fit_ols(x, targets, self.degree)
        elif self.kind == "logit":
            model = fit_logistic_irls(x, targets, self.degree)
        elif self.kind == "forest":
            model = fit_forest(x, targets, replace(self.forest, seed=seed))
        elif self.kind == "stack":
            model = fit_stacking(list(self.base), x, targets, self.cv, seed)
        else:
            raise ValueError(f"unknown learner kind {self.kind!r}")
        return model if self.cols is None else _ColumnModel(model, self.cols)

    @property
    def is_probability(self):
        return self.kind == "logit"

    def __str__(self):
        name = self.kind + ("2" if self.degree == 2 and self.kind in ("ols", "logit") else "")
        opts = []
        if self.kind == "forest":
            f, d = self.forest, ForestParams()
            for key in ("trees", "max_depth", "min_leaf", "mtry"):
                if getattr(f, key) != getattr(d, key):
                    opts.append(f"{key}={getattr(f, key)}")
        if self.kind == "stack":
            opts = [str(b) for b in self.base]
            if self.cv != 5:
                opts.append(f"cv={self.cv}")
        if self.cols is not None:
            opts.append("cols=" + "+".join(str(c) for c in self.cols))
        return f"{name}({','.join(opts)})" if opts else name


def _split_top(s):
    parts, depth, cur = [], 0, ""
    for ch in s:
        if ch == "," and depth == 0:
            parts.append(cur.strip())
            cur = ""
            continue
        depth += (ch == "(") - (ch == ")")
        if depth < 0:
            raise ValueError(f"unbalanced parentheses in {s!r}")
        cur += ch
    if depth != 0:
        raise ValueError(f"unbalanced parentheses in {s!r}")
    if cur.strip():
        parts.append(cur.strip())
    return parts


_FOREST_KEYS = {"trees", "max_depth", "min_leaf", "mtry"}


def parse_learner(spec):
    """Parse a learner spec string into a :class:`Learner`."""
    spec = spec.strip()
    name, args = spec, []
    if "(" in spec:
        if not spec.endswith(")"):
            raise ValueError(f"malformed learner spec {spec!r}")
        name = spec[: spec.index("(")].strip()
        args = _split_top(spec[spec.index("(") + 1: -1])
    opts, positional = {}, []
    for a in args:
        if "=" in a and "(" not in a.split("=", 1)[0]:
            k, v = a.split("=", 1)
            opts[k.strip()] = v.strip()
        else:
            positional.append(a)

    kw = {}
    if "cols" in opts:
        kw["cols"] = tuple(int(c) for c in opts.pop("cols").split("+"))
    if name in ("mean",):
        kw["kind"] = "mean"
    elif name in ("ols", "ols2", "logit", "logit2"):
        kw["kind"] = name.rstrip("2")
        kw["degree"] = 2 if name.endswith("2") else 1
    elif name == "forest":
        fp = {}
        for k in list(opts):
            if k in _FOREST_KEYS:
                fp[k] = int(opts.pop(k))
        kw["kind"] = "forest"
        kw["forest"] = ForestParams(**fp)
    elif name == "stack":
        if not positional:
            raise ValueError("stack() needs at least one base learner")
        kw["kind"] = "stack"
        kw["base"] = tuple(parse_learner(p) for p in positional)
        positional = []
        if "cv" in opts:
            kw["cv"] = int(opts.pop("cv"))
    else:
        raise ValueError(f"unknown learner {name!r}")
    if opts or positional:
        raise ValueError(f"unexpected arguments {opts or positional} in {spec!r}")
    return Learner(**kw)
