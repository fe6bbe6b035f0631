"""CART regression-tree kernels.

Every kernel has a loop-style body that numba compiles and a numpy twin used
when the JIT is disabled. Both consume the same pre-drawn randomness
(bootstrap rows, per-node feature keys) so the two backends grow identical
trees.

Tree layout (one row per tree, one column per node): ``feature`` is -1 at a
leaf, rows with ``x[feature] <= threshold`` go to ``left``.
"""

import numpy as np

from .._jit import USE_JIT


def max_nodes(n_rows, max_depth, min_leaf):
    by_depth = 2 ** (max_depth + 1) - 1
    by_leaf = 2 * max(n_rows // max(min_leaf, 1), 1) + 1
    return int(min(by_depth, by_leaf))


# ---------------------------------------------------------------------------
# numba path


def _grow_tree_loop(X, y, rows, keys, max_depth, min_leaf, mtry,
                    feature, threshold, left, right, value):
    m = rows.shape[0]
    cap = feature.shape[0]
    buf = rows.copy()
    stack = np.empty((cap, 4), dtype=np.int64)  # node, start, end, depth
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = m
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    tmp = np.empty(m, dtype=np.int64)
    xs = np.empty(m)
    cs = np.empty(m)
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        n = end - start

        acc = 0.0
        lo = y[buf[start]]
        hi = lo
        for j in range(n):
            v = y[buf[start + j]]
            acc += v
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        value[node] = acc / n
        feature[node] = -1
        if depth >= max_depth or n < 2 * min_leaf or lo == hi or n_nodes + 2 > cap:
            continue

        feats = np.argsort(keys[node], kind="mergesort")[:mtry]
        parent = acc * acc / n
        best_gain = parent
        best_f = -1
        best_i = -1
        best_thr = 0.0
        for f in feats:
            for j in range(n):
                xs[j] = X[buf[start + j], f]
            o = np.argsort(xs[:n], kind="mergesort")
            s = 0.0
            for j in range(n):
                s += y[buf[start + o[j]]]
                cs[j] = s
            total = cs[n - 1]
            for i in range(min_leaf, n - min_leaf + 1):
                xa = xs[o[i - 1]]
                xb = xs[o[i]]
                if not xa < xb:
                    continue
                sl = cs[i - 1]
                sr = total - sl
                gain = sl * sl / i + sr * sr / (n - i)
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_i = i
                    thr = 0.5 * (xa + xb)
                    if thr >= xb:
                        thr = xa
                    best_thr = thr
        if best_f < 0:
            continue

        for j in range(n):
            xs[j] = X[buf[start + j], best_f]
        o = np.argsort(xs[:n], kind="mergesort")
        for j in range(n):
            tmp[j] = buf[start + o[j]]
        for j in range(n):
            buf[start + j] = tmp[j]

        feature[node] = best_f
        threshold[node] = best_thr
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        # right pushed first so the left child is processed next
        stack[top, 0] = rnode
        stack[top, 1] = start + best_i
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lnode
        stack[top, 1] = start
        stack[top, 2] = start + best_i
        stack[top, 3] = depth + 1
        top += 1
    return n_nodes


def _grow_forest_loop(X, y, boot, keys, max_depth, min_leaf, mtry,
                      feature, threshold, left, right, value, n_nodes):
    for t in range(boot.shape[0]):
        n_nodes[t] = _grow_tree(X, y, boot[t], keys[t], max_depth, min_leaf, mtry,
                                feature[t], threshold[t], left[t], right[t], value[t])


def _predict_forest_loop(X, feature, threshold, left, right, value, out):
    n_trees = feature.shape[0]
    for i in range(X.shape[0]):
        out[i] = 0.0
    for t in range(n_trees):
        for i in range(X.shape[0]):
            node = 0
            while feature[t, node] >= 0:
                if X[i, feature[t, node]] <= threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            out[i] += value[t, node]
    for i in range(X.shape[0]):
        out[i] /= n_trees


# ---------------------------------------------------------------------------
# numpy path


def _grow_tree_numpy(X, y, rows, keys, max_depth, min_leaf, mtry,
                     feature, threshold, left, right, value):
    m = rows.shape[0]
    cap = feature.shape[0]
    buf = rows.copy()
    stack = [(0, 0, m, 0)]
    n_nodes = 1
    while stack:
        node, start, end, depth = stack.pop()
        n = end - start
        seg = buf[start:end]
        yseg = y[seg]
        value[node] = np.cumsum(yseg)[-1] / n
        feature[node] = -1
        if (depth >= max_depth or n < 2 * min_leaf or yseg.min() == yseg.max()
                or n_nodes + 2 > cap):
            continue

        feats = np.argsort(keys[node], kind="mergesort")[:mtry]
        total0 = np.cumsum(yseg)[-1]
        best_gain = total0 * total0 / n
        best_f = -1
        best_i = -1
        best_thr = 0.0
        pos = np.arange(min_leaf, n - min_leaf + 1)
        for f in feats:
            xcol = X[seg, f]
            o = np.argsort(xcol, kind="mergesort")
            xsorted = xcol[o]
            cs = np.cumsum(yseg[o])
            total = cs[-1]
            xa = xsorted[pos - 1]
            xb = xsorted[pos]
            sl = cs[pos - 1]
            sr = total - sl
            gain = sl * sl / pos + sr * sr / (n - pos)
            gain = np.where(xa < xb, gain, -np.inf)
            if gain.size == 0:
                continue
            k = int(np.argmax(gain))
            if gain[k] > best_gain:
                best_gain = gain[k]
                best_f = int(f)
                best_i = int(pos[k])
                thr = 0.5 * (xa[k] + xb[k])
                best_thr = xa[k] if thr >= xb[k] else thr
        if best_f < 0:
            continue

        o = np.argsort(X[seg, best_f], kind="mergesort")
        buf[start:end] = seg[o]
        feature[node] = best_f
        threshold[node] = best_thr
        lnode, rnode = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        stack.append((rnode, start + best_i, end, depth + 1))
        stack.append((lnode, start, start + best_i, depth + 1))
    return n_nodes


def _grow_forest_numpy(X, y, boot, keys, max_depth, min_leaf, mtry,
                       feature, threshold, left, right, value, n_nodes):
    for t in range(boot.shape[0]):
        n_nodes[t] = _grow_tree_numpy(X, y, boot[t], keys[t], max_depth, min_leaf, mtry,
                                      feature[t], threshold[t], left[t], right[t], value[t])


def _predict_forest_numpy(X, feature, threshold, left, right, value, out):
    n_trees = feature.shape[0]
    rows = np.arange(X.shape[0])
    out[:] = 0.0
    for t in range(n_trees):
        node = np.zeros(X.shape[0], dtype=np.int64)
        f = feature[t, node]
        active = f >= 0
        while active.any():
            idx = rows[active]
            nd = node[active]
            go_left = X[idx, f[active]] <= threshold[t, nd]
            node[active] = np.where(go_left, left[t, nd], right[t, nd])
            f = feature[t, node]
            active = f >= 0
        out += value[t, node]
    out /= n_trees


if USE_JIT:
    from numba import njit

    _grow_tree = njit(cache=True, nogil=True)(_grow_tree_loop)
    grow_forest = njit(cache=True, nogil=True)(_grow_forest_loop)
    predict_forest = njit(cache=True, nogil=True)(_predict_forest_loop)
else:
    _grow_tree = _grow_tree_loop
    grow_forest = _grow_forest_numpy
    predict_forest = _predict_forest_numpy

# always-available references for cross-backend tests and benchmarks
grow_forest_numpy = _grow_forest_numpy
predict_forest_numpy = _predict_forest_numpy
