from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import DataError


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray
    n_samples: int
    requested_k: int
    rank_deficient: bool = False

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def retained_variance(self) -> float:
        return float(self.explained_variance_ratio.sum())

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z) @ self.components + self.mean


def fit_pca(x, k: int) -> PcaModel:
    """Exact PCA by thin SVD of the mean-centred data.

    Component signs are fixed so each component's largest-magnitude entry is
    positive. If fewer than ``k`` directions carry non-zero variance only
    those are kept and ``rank_deficient`` is set (a ``RuntimeWarning`` is
    emitted).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("PCA input must be a 2-D matrix")
    n, d = x.shape
    if not 1 <= k <= min(n - 1, d):
        raise DataError(f"k={k} out of range for a {n}x{d} matrix (need 1 <= k <= min(N-1, D))")
    if not np.all(np.isfinite(x)):
        raise DataError("PCA input contains non-finite values")
    mean = x.mean(axis=0)
    # constant columns (e.g. padding slots) add nothing; drop them before the SVD
    live = np.flatnonzero(np.any(x != x[0], axis=0))
    xc = x[:, live] - mean[live]
    total = float(np.einsum("ij,ij->", xc, xc))
    if live.size:
        _, s, vt_live = np.linalg.svd(xc, full_matrices=False)
    else:
        s, vt_live = np.zeros(0), np.zeros((0, 0))
    del xc
    vt = np.zeros((vt_live.shape[0], d))
    vt[:, live] = vt_live
    tol = (s[0] if s.size else 0.0) * max(n, d) * np.finfo(np.float64).eps
    n_nonzero = int(np.count_nonzero(s > tol))
    keep = min(k, n_nonzero)
    deficient = keep < k
    if deficient:
        warnings.warn(f"only {keep} of {k} requested components have non-zero variance", RuntimeWarning)
    comps = vt[:keep].copy()
    pivot = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(keep), pivot])
    signs[signs == 0] = 1.0
    comps *= signs[:, None]
    var = s[:keep] ** 2 / (n - 1)
    ratio = s[:keep] ** 2 / total if total > 0 else np.zeros(keep)
    return PcaModel(mean, comps, var, ratio, n, k, deficient)


def pca_transform(model: PcaModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.mean.shape[0]:
        raise DataError(f"expected {model.mean.shape[0]} columns")
    return (x - model.mean) @ model.components.T
