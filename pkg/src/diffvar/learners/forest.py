"""Bagged CART regression forest."""

import math
from dataclasses import dataclass

import numpy as np

from . import _tree_kernels as K


@dataclass(frozen=True)
class ForestParams:
    trees: int = 200
    max_depth: int = 8
    min_leaf: int = 5
    mtry: int | None = None  # None -> ceil(p / 3)
    seed: int = 0


class ForestModel:
    def __init__(self, feature, threshold, left, right, value, n_nodes):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value
        self.n_nodes = n_nodes

    @property
    def n_trees(self):
        return self.feature.shape[0]

    def predict(self, features, backend=None):
        x = np.ascontiguousarray(np.asarray(features, dtype=float).reshape(len(features), -1))
        out = np.empty(x.shape[0])
        fn = K.predict_forest_numpy if backend == "numpy" else K.predict_forest
        fn(x, self.feature, self.threshold, self.left, self.right, self.value, out)
        return out


def draw_randomness(n, p, params):
    """Bootstrap rows and per-node feature keys, drawn up front from the seed."""
    rng = np.random.default_rng(params.seed)
    boot = rng.integers(0, n, size=(params.trees, n))
    cap = K.max_nodes(n, params.max_depth, params.min_leaf)
    keys = rng.random((params.trees, cap, p))
    return boot, keys


def fit_forest(features, targets, params=ForestParams(), backend=None):
    x = np.ascontiguousarray(np.asarray(features, dtype=float).reshape(len(features), -1))
    y = np.ascontiguousarray(targets, dtype=float)
    n, p = x.shape
    if n < 2 * params.min_leaf:
        raise ValueError(f"forest needs at least {2 * params.min_leaf} rows, got {n}")
    mtry = params.mtry if params.mtry is not None else math.ceil(p / 3)
    mtry = int(min(max(mtry, 1), p))
    boot, keys = draw_randomness(n, p, params)
    cap = keys.shape[1]
    t = params.trees
    feature = np.full((t, cap), -1, dtype=np.int64)
    threshold = np.zeros((t, cap))
    left = np.zeros((t, cap), dtype=np.int64)
    right = np.zeros((t, cap), dtype=np.int64)
    value = np.zeros((t, cap))
    n_nodes = np.zeros(t, dtype=np.int64)
    grow = K.grow_forest_numpy if backend == "numpy" else K.grow_forest
    grow(x, y, boot, keys, params.max_depth, params.min_leaf, mtry,
         feature, threshold, left, right, value, n_nodes)
    return ForestModel(feature, threshold, left, right, value, n_nodes)
