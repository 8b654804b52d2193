"""Model artifacts: parameters plus (optionally) the fitted featurizer they were trained on."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .. import artifacts
from ..errors import DataError
from .base import ModelSpec, TrainedModel


def model_to_bytes(model: TrainedModel, featurizer_blob: bytes | None = None) -> bytes:
    meta = {
        "spec": model.spec.to_json(),
        "labels": list(model.labels),
        "n_features": model.n_features,
        "featurizer_ref": model.featurizer_ref,
        "history": [float(h) for h in model.history],
    }
    tensors = {f"param.{k}": v for k, v in model.params.items()}
    if featurizer_blob is not None:
        ref = artifacts.digest(featurizer_blob)
        if model.featurizer_ref not in (None, ref):
            raise DataError("embedded featurizer does not match the model's featurizer_ref")
        meta["featurizer_ref"] = ref
        tensors["featurizer"] = np.frombuffer(featurizer_blob, dtype=np.uint8)
    return artifacts.dumps("model", meta, tensors)


def model_from_bytes(blob: bytes) -> tuple[TrainedModel, bytes | None]:
    _, meta, tensors = artifacts.loads(blob, "model")
    params = {k[len("param."):]: v for k, v in tensors.items() if k.startswith("param.")}
    fz = tensors.get("featurizer")
    model = TrainedModel(ModelSpec.from_json(meta["spec"]), tuple(meta["labels"]), params,
                         int(meta["n_features"]), meta["featurizer_ref"], list(meta["history"]))
    return model, (fz.tobytes() if fz is not None else None)


def save_model(path, model: TrainedModel, featurizer_blob: bytes | None = None) -> bytes:
    blob = model_to_bytes(model, featurizer_blob)
    Path(path).write_bytes(blob)
    return blob


def load_model(path) -> tuple[TrainedModel, bytes | None]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from None
    return model_from_bytes(blob)
