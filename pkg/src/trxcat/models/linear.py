"""Softmax regression and one-vs-rest linear SVM trained by mini-batch gradient descent.

Both share one loop: per epoch a seeded permutation, fixed-size batches,
linearly decaying step size. The L2 term is applied as a multiplicative
shrink ``W *= max(0, 1 - lr * lam)`` which equals the plain gradient step
whenever ``lr * lam < 1`` and stays stable otherwise.
"""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp, softmax


def _rows(x, idx):
    return x[idx]


def _dense(m):
    return np.asarray(m.todense()) if hasattr(m, "todense") else np.asarray(m)


def logistic_objective(w, b, x, y_idx, lam, weights=None):
    """Weighted mean cross-entropy plus ``lam/2 * ||W||^2``.

    Returns ``(value, grad_w, grad_b)``. ``w`` is K x D, ``b`` has length K.
    """
    n = y_idx.size
    weights = np.ones(n) if weights is None else weights
    z = np.asarray(x @ w.T) + b
    lse = logsumexp(z, axis=1)
    value = float(np.sum(weights * (lse - z[np.arange(n), y_idx])) / n + 0.5 * lam * np.sum(w * w))
    p = np.exp(z - lse[:, None])
    p[np.arange(n), y_idx] -= 1.0
    p *= weights[:, None] / n
    grad_w = _dense(x.T @ p).T + lam * w
    grad_b = p.sum(axis=0)
    return value, grad_w, grad_b


def hinge_objective(w, b, x, y_idx, lam, weights=None):
    """One-vs-rest hinge: ``lam/2 ||W||^2 + mean_i sum_k w_i max(0, 1 - y_ik f_k(x_i))``."""
    n = y_idx.size
    weights = np.ones(n) if weights is None else weights
    ypm = -np.ones((n, w.shape[0]))
    ypm[np.arange(n), y_idx] = 1.0
    margins = ypm * (np.asarray(x @ w.T) + b)
    loss = np.maximum(0.0, 1.0 - margins)
    value = float(np.sum(weights[:, None] * loss) / n + 0.5 * lam * np.sum(w * w))
    coef = -(ypm * (margins < 1.0)) * (weights[:, None] / n)
    grad_w = _dense(x.T @ coef).T + lam * w
    return value, grad_w, coef.sum(axis=0)


def _loss_grad(kind, w, b, xb, yb, wb, n_full):
    """Gradient of the batch data term only (no L2), normalized by batch size."""
    m = yb.size
    z = np.asarray(xb @ w.T) + b
    if kind == "logistic_regression":
        g = softmax(z, axis=1)
        g[np.arange(m), yb] -= 1.0
    else:
        ypm = -np.ones_like(z)
        ypm[np.arange(m), yb] = 1.0
        g = -(ypm * ((ypm * z) < 1.0))
    g *= (wb / m)[:, None]
    return _dense(xb.T @ g).T, g.sum(axis=0)


def fit(kind, x, y_idx, n_classes, hp, weights, seed):
    n, d = x.shape
    if kind == "linear_svm":
        lam = 1.0 / (hp["C"] * n)
        objective = hinge_objective
    else:
        lam = float(hp["l2"])
        objective = logistic_objective
    lr0 = float(hp["lr"])
    blr0 = float(hp["bias_lr"]) if hp["bias_lr"] is not None else lr0
    bs = min(int(hp["batch_size"]), n)
    epochs = int(hp["epochs"])
    n_batches = -(-n // bs)
    total = epochs * n_batches

    w = np.zeros((n_classes, d))
    b = np.zeros(n_classes)
    rng = np.random.default_rng(seed)
    history = []
    t = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = np.sort(order[start:start + bs])
            frac = 1.0 - t / total
            lr, blr = lr0 * frac, blr0 * frac
            gw, gb = _loss_grad(kind, w, b, _rows(x, idx), y_idx[idx], weights[idx], n)
            w *= max(0.0, 1.0 - lr * lam)
            w -= lr * gw
            b -= blr * gb
            t += 1
        history.append(objective(w, b, x, y_idx, lam, weights)[0])
    return {"coef": w, "intercept": b}, history


def decision_function(params, x):
    return np.asarray(x @ params["coef"].T) + params["intercept"]


def scores(kind, params, x):
    z = decision_function(params, x)
    if kind == "logistic_regression":
        return softmax(z, axis=1)
    return z
