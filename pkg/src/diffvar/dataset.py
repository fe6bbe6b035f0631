"""Observed-data container, CSV ingestion, outcome scaling and fold assignment."""

import csv
from dataclasses import dataclass

import numpy as np

EPS_Y = 1e-4


class DataError(ValueError):
    """Base class for input problems; the CLI maps these to exit code 2."""


class SchemaError(DataError):
    pass


class ValidationError(DataError):
    pass


class DegenerateDesignError(DataError):
    pass


class DegenerateOutcomeError(DataError):
    pass


class InfeasibleFoldError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Covariates ``w`` (n x p), binary treatment ``a`` and outcome ``y``."""

    w: np.ndarray
    a: np.ndarray
    y: np.ndarray
    covariates: tuple = ()

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim == 1:
            w = w.reshape(-1, 1) if w.size else w.reshape(len(self.y), 0)
        a = np.asarray(self.a)
        y = np.asarray(self.y, dtype=float)
        n = len(y)
        if a.shape != (n,) or w.shape[0] != n:
            raise ValidationError(f"length mismatch: w {w.shape}, a {a.shape}, y {y.shape}")
        if n < 2:
            raise ValidationError("need at least two observations")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(y))):
            raise ValidationError("non-finite values in w or y")
        if not np.all((a == 0) | (a == 1)):
            raise ValidationError("treatment must be 0 or 1")
        a = a.astype(np.int64)
        if a.sum() == 0 or a.sum() == n:
            raise DegenerateDesignError("both treatment arms must be non-empty")
        for name, arr in (("w", w), ("a", a), ("y", y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self):
        return len(self.y)

    @property
    def p(self):
        return self.w.shape[1]

    def subset(self, idx):
        return Dataset(self.w[idx], self.a[idx], self.y[idx], self.covariates)

    def with_outcome(self, y):
        return Dataset(self.w, self.a, y, self.covariates)


@dataclass(frozen=True)
class ScalingParams:
    y_min: float
    y_max: float

    @property
    def span(self):
        return self.y_max - self.y_min


def load_csv(path, outcome, treatment, covariates):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        missing = [c for c in (outcome, treatment, *covariates) if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        cols = [header.index(c) for c in (outcome, treatment, *covariates)]
        names = [outcome, treatment, *covariates]
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            vals = []
            for j, name in zip(cols, names):
                cell = rec[j].strip() if j < len(rec) else ""
                try:
                    v = float(cell)
                except ValueError:
                    raise ValidationError(
                        f"row {lineno}, column {name!r}: non-numeric value {cell!r}") from None
                if not np.isfinite(v):
                    raise ValidationError(f"row {lineno}, column {name!r}: non-finite value")
                vals.append(v)
            if vals[1] not in (0.0, 1.0):
                raise ValidationError(
                    f"row {lineno}, column {treatment!r}: treatment must be 0 or 1, got {rec[cols[1]]!r}")
            rows.append(vals)
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    arr = np.array(rows)
    w = arr[:, 2:] if covariates else np.zeros((len(arr), 0))
    return Dataset(w, arr[:, 1].astype(np.int64), arr[:, 0], tuple(covariates))


def scale_outcome(d, eps=EPS_Y):
    """Min-max scale ``y`` to the unit interval, clipped to ``[eps, 1 - eps]``."""
    lo, hi = float(d.y.min()), float(d.y.max())
    if not hi > lo:
        raise DegenerateOutcomeError(f"outcome is constant ({lo})")
    ys = np.clip((d.y - lo) / (hi - lo), eps, 1.0 - eps)
    return d.with_outcome(ys), ScalingParams(lo, hi)


def unscale_variance(v, s):
    if v < 0:
        raise ValueError(f"variance must be nonnegative, got {v}")
    return v * s.span ** 2


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    k: int
    fold_of: np.ndarray  # fold id in 0..k-1 per observation

    def indices(self, fold):
        return np.flatnonzero(self.fold_of == fold)

    def complement(self, fold):
        return np.flatnonzero(self.fold_of != fold)


def make_folds(d, k, seed):
    """Arm-stratified K-fold split, deterministic in ``seed``."""
    if k < 2:
        raise InfeasibleFoldError(f"k must be at least 2, got {k}")
    rng = np.random.default_rng(seed)
    fold = np.empty(d.n, dtype=np.int64)
    offset = 0
    for arm in (1, 0):
        idx = np.flatnonzero(d.a == arm)
        if len(idx) < k:
            raise InfeasibleFoldError(f"arm {arm} has {len(idx)} observations, fewer than k={k}")
        perm = rng.permutation(idx)
        # rotate so leftover units of the two arms land in different folds
        fold[perm] = (np.arange(len(perm)) + offset) % k
        offset = (offset + len(perm)) % k
    fold.setflags(write=False)
    return FoldAssignment(k, fold)
