"""k-fold cross-validated grid search over a hyperparameter lattice."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConfigError, DataError
from ..evaluation.metrics import weighted_f1
from . import predict, train
from .base import ModelSpec, as_operand

log = logging.getLogger(__name__)

DEFAULT_SVM_GRID = {"C": [0.01, 0.1, 1.0, 10.0], "epochs": [10, 30]}

# sign: +1 means larger value = more capacity
_CAPACITY = {"C": 1, "l2": -1, "alpha": -1, "epochs": 1, "n_trees": 1, "max_depth": 1, "min_leaf": -1}


@dataclass
class GridReport:
    points: list[dict]
    rows: list[dict] = field(default_factory=list)  # one per (point, fold)
    mean_f1: list[float | None] = field(default_factory=list)
    best_index: int = -1

    def to_json(self) -> dict:
        return {"points": self.points, "rows": self.rows, "mean_f1": self.mean_f1, "best_index": self.best_index}


def expand_grid(grid: Mapping[str, Sequence]) -> list[dict]:
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("grid must be non-empty")
    keys = sorted(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def stratified_folds(y: Sequence[str], k: int, seed: int) -> np.ndarray:
    """Fold id per row; each class is shuffled then dealt round-robin, continuing across classes."""
    rng = np.random.default_rng(seed)
    y = np.asarray(y, dtype=object)
    fold = np.empty(y.size, dtype=np.int64)
    cursor = 0
    for lab in sorted(set(y.tolist())):
        idx = np.flatnonzero(y == lab)
        idx = idx[rng.permutation(idx.size)]
        fold[idx] = (cursor + np.arange(idx.size)) % k
        cursor += idx.size
    return fold


def _capacity_key(point: Mapping) -> tuple:
    key = []
    for name in sorted(point):
        v = point[name]
        sign = _CAPACITY.get(name, 0)
        if v is None:
            v = float("inf")
        key.append(sign * v if isinstance(v, (int, float)) else 0)
    return tuple(key)


def grid_search(x, y: Sequence[str], base_spec: ModelSpec, grid: Mapping[str, Sequence] | None = None,
                folds: int = 3) -> tuple[ModelSpec, GridReport]:
    """Pick the grid point with the best mean weighted F1 over ``folds`` stratified folds.

    Ties (within 1e-12) go to the smaller-capacity point. Folds whose training
    part holds a single class are flagged in the report and skipped; a point
    with no usable fold is never selected.
    """
    if folds < 2:
        raise ConfigError("grid search needs at least 2 folds")
    grid = DEFAULT_SVM_GRID if grid is None else grid
    points = expand_grid(grid)
    specs = [base_spec.with_params(**p) for p in points]
    m = as_operand(x)
    y = list(y)
    if len(y) != m.shape[0]:
        raise DataError("label count does not match feature rows")
    fold_id = stratified_folds(y, folds, base_spec.seed)
    y_arr = np.asarray(y, dtype=object)
    report = GridReport(points=points)
    for pi, spec in enumerate(specs):
        scores = []
        for f in range(folds):
            tr, te = np.flatnonzero(fold_id != f), np.flatnonzero(fold_id == f)
            row = {"point": pi, "fold": f, "weighted_f1": None, "flagged": False}
            if te.size == 0 or len(set(y_arr[tr].tolist())) < 2:
                row["flagged"] = True
                row["reason"] = "degenerate fold"
            else:
                model = train(m[tr], y_arr[tr].tolist(), spec)
                score = weighted_f1(y_arr[te].tolist(), predict(model, m[te]))
                row["weighted_f1"] = score
                scores.append(score)
            report.rows.append(row)
        mean = float(np.mean(scores)) if scores else None
        report.mean_f1.append(mean)
        log.info("grid point %s: mean weighted F1 %s", points[pi], mean)
    usable = [i for i, s in enumerate(report.mean_f1) if s is not None]
    if not usable:
        raise DataError("every grid point had only degenerate folds")
    top = max(report.mean_f1[i] for i in usable)
    tied = [i for i in usable if report.mean_f1[i] >= top - 1e-12]
    best = min(tied, key=lambda i: (_capacity_key(points[i]), i))
    report.best_index = best
    return specs[best], report
