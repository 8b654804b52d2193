from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import ConfigError, DataError
from ..sparse import SparseMatrix

KINDS = ("naive_bayes", "logistic_regression", "linear_svm", "random_forest")

DEFAULTS: dict[str, dict[str, Any]] = {
    "naive_bayes": {"alpha": 1.0, "class_weight": None},
    "logistic_regression": {
        "l2": 1e-5, "epochs": 30, "batch_size": 64, "lr": 1.0, "bias_lr": None, "class_weight": None,
    },
    "linear_svm": {
        "C": 1.0, "epochs": 20, "batch_size": 64, "lr": 0.5, "bias_lr": None, "class_weight": None,
    },
    "random_forest": {
        "n_trees": 100, "max_depth": None, "min_leaf": 1, "feature_subsample": "sqrt",
        "bootstrap": True, "class_weight": None,
    },
}


def _positive(name, v):
    if not (isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 and np.isfinite(v)):
        raise ConfigError(f"{name} must be a positive number, got {v!r}")


def _positive_int(name, v):
    if not (isinstance(v, int) and not isinstance(v, bool) and v >= 1):
        raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.hyperparameters) - set(DEFAULTS[self.kind])
        if unknown:
            raise ConfigError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")
        hp = {**DEFAULTS[self.kind], **self.hyperparameters}
        object.__setattr__(self, "hyperparameters", hp)
        cw = hp.get("class_weight")
        if cw not in (None, "balanced"):
            raise ConfigError("class_weight must be null or 'balanced'")
        if self.kind == "naive_bayes":
            _positive("alpha", hp["alpha"])
        elif self.kind in ("logistic_regression", "linear_svm"):
            if self.kind == "linear_svm":
                _positive("C", hp["C"])
            elif not (hp["l2"] >= 0):
                raise ConfigError("l2 must be >= 0")
            _positive_int("epochs", hp["epochs"])
            _positive_int("batch_size", hp["batch_size"])
            _positive("lr", hp["lr"])
            if hp["bias_lr"] is not None:
                _positive("bias_lr", hp["bias_lr"])
        else:
            _positive_int("n_trees", hp["n_trees"])
            _positive_int("min_leaf", hp["min_leaf"])
            if hp["max_depth"] is not None:
                _positive_int("max_depth", hp["max_depth"])
            fs = hp["feature_subsample"]
            if not (fs in ("sqrt", "all") or (isinstance(fs, int) and fs >= 1)):
                raise ConfigError("feature_subsample must be 'sqrt', 'all' or a positive int")

    def with_params(self, **changes) -> "ModelSpec":
        return ModelSpec(self.kind, {**self.hyperparameters, **changes}, self.seed)

    def to_json(self) -> dict:
        return {"kind": self.kind, "hyperparameters": dict(self.hyperparameters), "seed": self.seed}

    @classmethod
    def from_json(cls, doc: Mapping) -> "ModelSpec":
        return cls(doc["kind"], dict(doc.get("hyperparameters", {})), int(doc.get("seed", 0)))


@dataclass
class TrainedModel:
    spec: ModelSpec
    labels: tuple[str, ...]
    params: dict[str, np.ndarray]
    n_features: int
    featurizer_ref: str | None = None
    history: list[float] = field(default_factory=list)

    @property
    def kind(self) -> str:
        return self.spec.kind


def as_operand(x):
    """Sparse input -> scipy CSR, dense -> float64 ndarray; rejects non-finite values."""
    if isinstance(x, SparseMatrix):
        m = x.to_scipy()
        data = m.data
    elif sp.issparse(x):
        m = x.tocsr()
        data = m.data
    else:
        m = np.asarray(x, dtype=np.float64)
        if m.ndim != 2:
            raise DataError("feature matrix must be 2-D")
        data = m
    if not np.all(np.isfinite(data)):
        raise DataError("feature matrix contains non-finite values")
    return m


def encode_labels(y: Sequence[str]) -> tuple[tuple[str, ...], np.ndarray]:
    labels = tuple(sorted(set(y)))
    if len(labels) < 2:
        raise DataError("training needs at least two distinct labels")
    index = {lab: i for i, lab in enumerate(labels)}
    return labels, np.fromiter((index[v] for v in y), dtype=np.int64, count=len(y))


def sample_weights(y_idx: np.ndarray, n_classes: int, class_weight) -> np.ndarray:
    if class_weight is None:
        return np.ones(y_idx.size)
    counts = np.bincount(y_idx, minlength=n_classes).astype(np.float64)
    per_class = np.where(counts > 0, y_idx.size / (n_classes * np.maximum(counts, 1)), 0.0)
    return per_class[y_idx]


def check_features(model: TrainedModel, x):
    m = as_operand(x)
    if m.shape[1] != model.n_features:
        raise DataError(f"model expects {model.n_features} features, got {m.shape[1]}")
    return m
