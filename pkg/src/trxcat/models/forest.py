"""Random forest of CART trees (Gini impurity, axis-aligned thresholds)."""
from __future__ import annotations

import logging
import math

import numba
import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


def _n_try(setting, d):
    if setting == "all":
        return d
    if setting == "sqrt":
        return max(1, int(math.sqrt(d)))
    return min(int(setting), d)


@numba.njit(cache=True)
def _scan(xs, ys, ws, n_classes, min_leaf):
    """Sweep sorted values; return (weighted Gini impurity, split position) of the best cut."""
    m = xs.size
    total = np.zeros(n_classes)
    for i in range(m):
        total[ys[i]] += ws[i]
    wt = total.sum()
    left = np.zeros(n_classes)
    best, best_i = np.inf, -1
    nl = 0.0
    for i in range(m - 1):
        left[ys[i]] += ws[i]
        nl += ws[i]
        if xs[i] >= xs[i + 1] or i + 1 < min_leaf or m - i - 1 < min_leaf:
            continue
        nr = wt - nl
        sl = 0.0
        sr = 0.0
        for c in range(n_classes):
            sl += left[c] * left[c]
            r = total[c] - left[c]
            sr += r * r
        imp = 0.0
        if nl > 0:
            imp += nl - sl / nl
        if nr > 0:
            imp += nr - sr / nr
        if imp < best:
            best, best_i = imp, i
    return best, best_i


def _best_split(col, yk, w, n_classes, min_leaf):
    """Best threshold on one feature; returns (impurity, threshold) or None."""
    order = np.argsort(col, kind="stable")
    xs = col[order]
    imp, i = _scan(xs, yk[order], w[order], n_classes, min_leaf)
    if i < 0:
        return None
    thr = 0.5 * (xs[i] + xs[i + 1])
    if thr >= xs[i + 1]:
        thr = xs[i]
    return float(imp), float(thr)


def _node_view(x, r):
    """Rows ``r`` of ``x`` plus the features that are not constant on them."""
    if sp.issparse(x):
        sub = x[r].tocsc()
        sub.sort_indices()
        cand = np.flatnonzero(np.diff(sub.indptr) > 0)

        def col(f):
            out = np.zeros(sub.shape[0])
            a, b = sub.indptr[f], sub.indptr[f + 1]
            out[sub.indices[a:b]] = sub.data[a:b]
            return out
    else:
        sub = np.asfortranarray(x[r])
        cand = np.flatnonzero(np.ptp(sub, axis=0) > 0) if sub.shape[0] else np.zeros(0, np.int64)

        def col(f):
            return sub[:, f]
    return cand, col


def grow_tree(x, y_idx, weights, n_classes, rows, hp, rng):
    """Grow one tree on ``rows`` (may contain repeats).

    At each node ``n_try`` features are drawn among those not constant on the
    node; if none of them admits a split the search continues through the
    remaining ones.
    """
    n_try = _n_try(hp["feature_subsample"], x.shape[1])
    max_depth = hp["max_depth"] if hp["max_depth"] is not None else 1 << 30
    min_leaf = hp["min_leaf"]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(r):
        dist = np.bincount(y_idx[r], weights=weights[r], minlength=n_classes)
        s = dist.sum()
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(dist / s if s > 0 else dist)
        return len(feature) - 1

    stack = [(new_node(rows), rows, 0)]
    while stack:
        node, r, depth = stack.pop()
        yk = y_idx[r]
        if depth >= max_depth or r.size < 2 * min_leaf or np.all(yk == yk[0]):
            continue
        w = weights[r]
        cand, col = _node_view(x, r)
        best = None
        for k, f in enumerate(rng.permutation(cand)):
            if k >= n_try and best is not None:
                break
            res = _best_split(col(f), yk, w, n_classes, min_leaf)
            if res is not None and (best is None or res[0] < best[0]):
                best = (res[0], res[1], int(f))
        if best is None:
            continue
        _, thr, f = best
        go_left = col(f) <= thr
        feature[node], threshold[node] = f, thr
        lr_, rr_ = r[go_left], r[~go_left]
        left[node] = new_node(lr_)
        right[node] = new_node(rr_)
        stack.append((right[node], rr_, depth + 1))
        stack.append((left[node], lr_, depth + 1))
    return (np.asarray(feature, np.int64), np.asarray(threshold, np.float64),
            np.asarray(left, np.int64), np.asarray(right, np.int64), np.vstack(value))


def fit(x, y_idx, n_classes, hp, weights, seed):
    n = x.shape[0]
    if sp.issparse(x):
        log.info("random forest on sparse input: this path is supported but slow")
    trees = []
    for t in range(hp["n_trees"]):
        rng = np.random.default_rng([seed, t])
        if hp["bootstrap"] and hp["n_trees"] > 1:
            rows = np.sort(rng.integers(0, n, size=n))
        else:
            rows = np.arange(n)
        trees.append(grow_tree(x, y_idx, weights, n_classes, rows, hp, rng))
    return pack(trees, n_classes)


def pack(trees, n_classes):
    sizes = np.array([t[0].size for t in trees], dtype=np.int64)
    return {
        "tree_offsets": np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64),
        "feature": np.concatenate([t[0] for t in trees]),
        "threshold": np.concatenate([t[1] for t in trees]),
        "left": np.concatenate([t[2] for t in trees]),
        "right": np.concatenate([t[3] for t in trees]),
        "value": np.vstack([t[4] for t in trees]).reshape(-1, n_classes),
    }


def scores(params, x):
    """Fraction of trees voting for each class (a tree votes its leaf's majority class)."""
    sparse = sp.issparse(x)
    offsets = params["tree_offsets"]
    n_trees = offsets.size - 1
    n_classes = params["value"].shape[1]
    votes = np.zeros((x.shape[0], n_classes))
    rows = np.arange(x.shape[0])
    for t in range(n_trees):
        base = offsets[t]
        node = np.zeros(x.shape[0], dtype=np.int64)
        while True:
            g = node + base
            f = params["feature"][g]
            active = f >= 0
            if not active.any():
                break
            ga = g[active]
            if sparse:
                vals = np.asarray(x[rows[active], f[active]]).ravel()
            else:
                vals = x[rows[active], f[active]]
            go_left = vals <= params["threshold"][ga]
            node[active] = np.where(go_left, params["left"][ga], params["right"][ga])
        leaf_class = np.argmax(params["value"][node + base], axis=1)
        votes[rows, leaf_class] += 1.0
    return votes / n_trees
