"""One train/predict interface over naive Bayes, softmax regression, linear SVM and random forest."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import forest, linear, naive_bayes
from .base import DEFAULTS, KINDS, ModelSpec, TrainedModel, as_operand, check_features, encode_labels, sample_weights
from .linear import hinge_objective, logistic_objective
from ..errors import DataError

__all__ = [
    "DEFAULTS", "KINDS", "ModelSpec", "TrainedModel", "train", "predict", "predict_scores",
    "grid_search", "GridReport", "logistic_objective", "hinge_objective", "DEFAULT_SVM_GRID",
]


def train(x, y: Sequence[str], spec: ModelSpec, featurizer_ref: str | None = None) -> TrainedModel:
    m = as_operand(x)
    y = list(y)
    if len(y) != m.shape[0]:
        raise DataError(f"{m.shape[0]} feature rows but {len(y)} labels")
    labels, y_idx = encode_labels(y)
    k = len(labels)
    hp = spec.hyperparameters
    weights = sample_weights(y_idx, k, hp.get("class_weight"))
    history: list[float] = []
    if spec.kind == "naive_bayes":
        params = naive_bayes.fit(m, y_idx, k, float(hp["alpha"]), weights)
    elif spec.kind == "random_forest":
        params = forest.fit(m, y_idx, k, hp, weights, spec.seed)
    else:
        params, history = linear.fit(spec.kind, m, y_idx, k, hp, weights, spec.seed)
    return TrainedModel(spec, labels, params, m.shape[1], featurizer_ref, history)


def predict_scores(model: TrainedModel, x) -> np.ndarray:
    """Per-class scores: probabilities (NB, LR), margins (SVM) or vote fractions (RF)."""
    m = check_features(model, x)
    if model.kind == "naive_bayes":
        return naive_bayes.scores(model.params, m)
    if model.kind == "random_forest":
        return forest.scores(model.params, m)
    return linear.scores(model.kind, model.params, m)


def predict(model: TrainedModel, x) -> list[str]:
    if model.kind == "naive_bayes":
        # argmax on the joint log-likelihood avoids exp underflow ties
        s = naive_bayes.joint_log_likelihood(model.params, check_features(model, x))
    else:
        s = predict_scores(model, x)
    if s.shape[0] == 0:
        return []
    return [model.labels[i] for i in np.argmax(s, axis=1)]


from .search import DEFAULT_SVM_GRID, GridReport, grid_search  # noqa: E402
from .io import load_model, model_from_bytes, model_to_bytes, save_model  # noqa: E402

__all__ += ["load_model", "save_model", "model_from_bytes", "model_to_bytes"]
