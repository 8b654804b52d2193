from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..errors import ConfigError
from ..similarity import TfidfModel, fit_tfidf, transform
from ..sparse import SparseMatrix


@dataclass(frozen=True)
class NgramConfig:
    max_n: int = 3
    min_df: int = 1

    def __post_init__(self):
        if not 1 <= self.max_n <= 5:
            raise ConfigError(f"max_n must be in [1, 5], got {self.max_n}")
        if self.min_df < 1:
            raise ConfigError("min_df must be >= 1")


def extract_ngrams(tokens: Sequence[str], config: NgramConfig) -> list[str]:
    """Contiguous word n-grams of orders 1..max_n, with multiplicity."""
    toks = list(tokens)
    out = []
    for n in range(1, config.max_n + 1):
        for i in range(len(toks) - n + 1):
            out.append(" ".join(toks[i:i + n]))
    return out


@dataclass
class NgramTfidf:
    config: NgramConfig
    tfidf: TfidfModel

    @property
    def n_features(self) -> int:
        return len(self.tfidf.vocabulary)


def fit_ngram_tfidf(docs: Sequence[Sequence[str]], config: NgramConfig) -> NgramTfidf:
    return NgramTfidf(config, fit_tfidf([extract_ngrams(d, config) for d in docs], config.min_df))


def ngram_transform(model: NgramTfidf, docs: Sequence[Sequence[str]]) -> SparseMatrix:
    return transform(model.tfidf, [extract_ngrams(d, model.config) for d in docs])
