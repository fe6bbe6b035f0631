"""Cross-validated stacking over the probability simplex."""

import itertools
import logging
import warnings

import numpy as np

log = logging.getLogger(__name__)

GRID_STEP = 0.05
GRID_MAX_LEARNERS = 4


def simplex_grid(k, step=GRID_STEP):
    """All weight vectors on the simplex with coordinates in multiples of ``step``."""
    m = int(round(1.0 / step))
    pts = []
    for cuts in itertools.combinations(range(m + k - 1), k - 1):
        parts = np.diff((-1, *cuts, m + k - 1)) - 1
        pts.append(parts / m)
    return np.array(pts)


def _project_simplex(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u - css / np.arange(1, len(v) + 1) > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


def simplex_weights(cv_preds, targets):
    """Weights minimising mean squared error of ``cv_preds @ w`` over the simplex."""
    k = cv_preds.shape[1]
    if k == 1:
        return np.ones(1)
    if k <= GRID_MAX_LEARNERS:
        grid = simplex_grid(k)
        resid = cv_preds @ grid.T - targets[:, None]
        return grid[int(np.argmin(np.mean(resid ** 2, axis=0)))]
    # projected gradient from the best corner
    corner = int(np.argmin(np.mean((cv_preds - targets[:, None]) ** 2, axis=0)))
    w = np.zeros(k)
    w[corner] = 1.0
    gram = cv_preds.T @ cv_preds / len(targets)
    lin = cv_preds.T @ targets / len(targets)
    lr = 1.0 / max(np.linalg.eigvalsh(gram)[-1], 1e-12)
    for _ in range(2000):
        new = _project_simplex(w - lr * (gram @ w - lin))
        if np.max(np.abs(new - w)) < 1e-12:
            break
        w = new
    return w


def cv_folds(n, k, seed):
    rng = np.random.default_rng(seed)
    fold = np.empty(n, dtype=np.int64)
    fold[rng.permutation(n)] = np.arange(n) % k
    return fold


class StackedModel:
    def __init__(self, models, weights, names, cv_mse):
        self.models = models
        self.weights = weights
        self.names = names
        self.cv_mse = cv_mse

    def predict(self, features):
        out = np.zeros(len(features))
        for w, m in zip(self.weights, self.models):
            if w > 0:
                out += w * m.predict(features)
        return out


def fit_stacking(base, features, targets, cv_folds_=5, seed=0):
    """Super-learner style stack of ``base`` learners.

    Each learner is scored on ``cv_folds_``-fold out-of-fold predictions; a
    learner that raises is dropped with a warning.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    n = len(y)
    if cv_folds_ < 2 or n < cv_folds_:
        raise ValueError(f"need cv_folds >= 2 and n >= cv_folds (n={n}, cv_folds={cv_folds_})")
    fold = cv_folds(n, cv_folds_, seed)
    kept, preds = [], []
    for j, learner in enumerate(base):
        oof = np.empty(n)
        try:
            for v in range(cv_folds_):
                tr = fold != v
                model = learner.fit(x[tr], y[tr], seed=seed + 7919 * (j + 1) + v)
                oof[~tr] = model.predict(x[~tr])
        except (ValueError, np.linalg.LinAlgError) as exc:
            warnings.warn(f"stacking: dropping {learner} ({exc})", RuntimeWarning, stacklevel=2)
            continue
        kept.append(j)
        preds.append(oof)
    if not kept:
        raise ValueError("every base learner failed")
    cv_preds = np.column_stack(preds)
    weights = simplex_weights(cv_preds, y)
    cv_mse = float(np.mean((cv_preds @ weights - y) ** 2))
    models = []
    for j, w in zip(kept, weights):
        models.append(base[j].fit(x, y, seed=seed + 7919 * (j + 1) + cv_folds_) if w > 0 else None)
    names = [str(base[j]) for j in kept]
    log.debug("stack weights %s", dict(zip(names, weights.round(3))))
    return StackedModel(models, weights, names, cv_mse)
