"""Multinomial naive Bayes with additive (Laplace) smoothing."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from ..errors import DataError


def fit(x, y_idx, n_classes, alpha, weights):
    data = x.data if sp.issparse(x) else x
    if np.any(data < 0):
        raise DataError("naive Bayes requires non-negative features")
    onehot = np.zeros((y_idx.size, n_classes))
    onehot[np.arange(y_idx.size), y_idx] = weights
    class_count = onehot.sum(axis=0)
    feature_count = np.asarray(x.T @ onehot).T  # K x D
    smoothed = feature_count + alpha
    log_likelihood = np.log(smoothed) - np.log(smoothed.sum(axis=1, keepdims=True))
    with np.errstate(divide="ignore"):
        log_prior = np.log(class_count / class_count.sum())
    return {"log_prior": log_prior, "log_likelihood": log_likelihood}


def joint_log_likelihood(params, x):
    return np.asarray(x @ params["log_likelihood"].T) + params["log_prior"]


def scores(params, x):
    jll = joint_log_likelihood(params, x)
    return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))
