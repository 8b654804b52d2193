"""Fitted featurizers (n-gram TF-IDF or Word2Vec + PCA) bundled with their preprocessor."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from . import artifacts
from .corpus import Dataset
from .errors import ConfigError, DataError
from .features import (EmbeddingModel, NgramConfig, NgramTfidf, PcaModel, Word2VecParams, embed_many,
                       fit_ngram_tfidf, fit_pca, ngram_transform, pca_transform, train_word2vec)
from .preprocess import Preprocessor
from .similarity import TfidfModel
from .sparse import SparseMatrix

log = logging.getLogger(__name__)

FEATURIZER_KINDS = ("ngram-tfidf", "word2vec-pca")
_W2V_KEYS = ("vector_size", "window", "epochs", "negative", "min_count", "alpha", "min_alpha")


@dataclass(frozen=True)
class FeaturizerSpec:
    kind: str = "ngram-tfidf"
    options: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 1

    _DEFAULTS = {
        "ngram-tfidf": {"max_n": 3, "min_df": 1},
        "word2vec-pca": {"vector_size": 300, "pad_len": 14, "k": 300, "window": 3, "epochs": 15,
                         "negative": 5, "min_count": 2, "alpha": 0.025, "min_alpha": 0.0001},
    }

    def __post_init__(self):
        if self.kind not in FEATURIZER_KINDS:
            raise ConfigError(f"unknown featurizer {self.kind!r}; expected one of {FEATURIZER_KINDS}")
        defaults = self._DEFAULTS[self.kind]
        unknown = set(self.options) - set(defaults)
        if unknown:
            raise ConfigError(f"{self.kind}: unknown options {sorted(unknown)}")
        opts = {**defaults, **self.options}
        object.__setattr__(self, "options", opts)
        if self.kind == "ngram-tfidf":
            NgramConfig(opts["max_n"], opts["min_df"])
        else:
            self.word2vec_params()
            if opts["pad_len"] < 1 or opts["k"] < 1:
                raise ConfigError("pad_len and k must be >= 1")

    def word2vec_params(self) -> Word2VecParams:
        return Word2VecParams(**{k: self.options[k] for k in _W2V_KEYS}, seed=self.seed)

    def to_json(self) -> dict:
        return {"kind": self.kind, "options": dict(self.options), "seed": self.seed}

    @classmethod
    def from_json(cls, doc: Mapping) -> "FeaturizerSpec":
        return cls(doc.get("kind", "ngram-tfidf"), dict(doc.get("options", {})), int(doc.get("seed", 1)))

    @property
    def label(self) -> str:
        if self.kind == "ngram-tfidf":
            return f"{self.options['max_n']}-gram TF-IDF"
        return f"Word2Vec d={self.options['vector_size']} + PCA {self.options['k']}"


@dataclass
class Featurizer:
    spec: FeaturizerSpec
    preprocessor: Preprocessor
    ngram: NgramTfidf | None = None
    embedding: EmbeddingModel | None = None
    pca: PcaModel | None = None

    @property
    def n_features(self) -> int:
        return self.ngram.n_features if self.ngram is not None else self.pca.k

    def tokens(self, dataset: Dataset):
        return self.preprocessor.dataset(dataset)

    def transform_tokens(self, docs: Sequence[Sequence[str]]):
        if self.spec.kind == "ngram-tfidf":
            return ngram_transform(self.ngram, docs)
        if len(docs) == 0:
            return np.zeros((0, self.pca.k))
        return pca_transform(self.pca, embed_many(docs, self.embedding, self.spec.options["pad_len"]))

    def transform(self, dataset: Dataset) -> SparseMatrix | np.ndarray:
        return self.transform_tokens(self.tokens(dataset))

    # -- serialization -------------------------------------------------
    def to_bytes(self) -> bytes:
        meta: dict[str, Any] = {"spec": self.spec.to_json(), "preprocessor": self.preprocessor.to_dict()}
        tensors: dict[str, np.ndarray] = {}
        if self.ngram is not None:
            meta["terms"] = self.ngram.tfidf.terms
            tensors["idf"] = self.ngram.tfidf.idf
        else:
            emb, pca = self.embedding, self.pca
            meta["vocabulary"] = sorted(emb.vocabulary, key=emb.vocabulary.__getitem__)
            meta["losses"] = list(emb.losses)
            meta["pca"] = {"n_samples": pca.n_samples, "requested_k": pca.requested_k,
                           "rank_deficient": pca.rank_deficient}
            tensors.update({
                "vectors": emb.vectors.astype(np.float32),
                "counts": emb.counts if emb.counts is not None else np.zeros(0, np.int64),
                "pca_mean": pca.mean, "pca_components": pca.components,
                "pca_variance": pca.explained_variance, "pca_ratio": pca.explained_variance_ratio,
            })
        return artifacts.dumps("featurizer", meta, tensors)

    @property
    def ref(self) -> str:
        return artifacts.digest(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Featurizer":
        _, meta, t = artifacts.loads(blob, "featurizer")
        spec = FeaturizerSpec.from_json(meta["spec"])
        pre = Preprocessor.from_dict(meta["preprocessor"])
        if spec.kind == "ngram-tfidf":
            terms = meta["terms"]
            cfg = NgramConfig(spec.options["max_n"], spec.options["min_df"])
            tfidf = TfidfModel({term: i for i, term in enumerate(terms)}, t["idf"])
            return cls(spec, pre, ngram=NgramTfidf(cfg, tfidf))
        vocab = {tok: i for i, tok in enumerate(meta["vocabulary"])}
        counts = t["counts"] if t["counts"].size else None
        emb = EmbeddingModel(vocab, t["vectors"], spec.word2vec_params(), counts, list(meta["losses"]))
        p = meta["pca"]
        pca = PcaModel(t["pca_mean"], t["pca_components"], t["pca_variance"], t["pca_ratio"],
                       p["n_samples"], p["requested_k"], p["rank_deficient"])
        return cls(spec, pre, embedding=emb, pca=pca)

    def save(self, path) -> bytes:
        blob = self.to_bytes()
        with open(path, "wb") as fh:
            fh.write(blob)
        return blob

    @classmethod
    def load(cls, path) -> "Featurizer":
        try:
            with open(path, "rb") as fh:
                return cls.from_bytes(fh.read())
        except OSError as exc:
            raise DataError(f"cannot read featurizer {path}: {exc}") from None


def fit_featurizer(spec: FeaturizerSpec, preprocessor: Preprocessor, train: Dataset | None = None,
                   docs: Sequence[Sequence[str]] | None = None) -> Featurizer:
    """Fit on training data only. Pass either a dataset or its preprocessed token lists."""
    if docs is None:
        if train is None:
            raise ValueError("need a training dataset or its tokens")
        docs = preprocessor.dataset(train)
    if len(docs) == 0:
        raise DataError("cannot fit a featurizer on zero records")
    if spec.kind == "ngram-tfidf":
        cfg = NgramConfig(spec.options["max_n"], spec.options["min_df"])
        return Featurizer(spec, preprocessor, ngram=fit_ngram_tfidf(docs, cfg))
    emb = train_word2vec(docs, spec.word2vec_params())
    x = embed_many(docs, emb, spec.options["pad_len"])
    k = spec.options["k"]
    limit = min(x.shape[0] - 1, x.shape[1])
    if k > limit:
        warnings.warn(f"PCA k={k} exceeds min(N-1, D)={limit}; using {limit}", RuntimeWarning)
        k = limit
    if k < 1:
        raise DataError("too few training records for PCA")
    pca = fit_pca(x, k)
    pca.requested_k = spec.options["k"]
    log.info("PCA retains %.6f of variance with %d components", pca.retained_variance, pca.k)
    return Featurizer(spec, preprocessor, embedding=emb, pca=pca)

