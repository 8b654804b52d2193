"""Skip-gram with negative sampling, single worker, bit-reproducible for a seed."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numba
import numpy as np

from ..errors import ConfigError, DataError

log = logging.getLogger(__name__)

VECTOR_SIZES = (100, 200, 300)
_TABLE_SIZE = 1_000_000


@dataclass(frozen=True)
class Word2VecParams:
    vector_size: int = 300
    window: int = 3
    epochs: int = 15
    negative: int = 5
    min_count: int = 2
    alpha: float = 0.025
    min_alpha: float = 0.0001
    seed: int = 1

    def __post_init__(self):
        if self.vector_size not in VECTOR_SIZES:
            raise ConfigError(f"vector_size must be one of {VECTOR_SIZES}")
        if self.window < 1 or self.epochs < 1 or self.negative < 1 or self.min_count < 1:
            raise ConfigError("window, epochs, negative and min_count must be >= 1")
        if not 0 < self.min_alpha <= self.alpha:
            raise ConfigError("learning rates must satisfy 0 < min_alpha <= alpha")


@dataclass
class EmbeddingModel:
    vocabulary: dict[str, int]
    vectors: np.ndarray
    params: Word2VecParams
    counts: np.ndarray | None = None
    losses: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.shape != (len(self.vocabulary), self.params.vector_size):
            raise ValueError("vectors must be |V| x vector_size")

    @property
    def vector_size(self) -> int:
        return self.params.vector_size

    def __getitem__(self, token: str) -> np.ndarray:
        return self.vectors[self.vocabulary[token]]

    def similarity(self, a: str, b: str) -> float:
        u, v = self[a].astype(np.float64), self[b].astype(np.float64)
        return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))

    def params_dict(self) -> dict:
        return asdict(self.params)


@numba.njit(cache=True)
def _next(state):
    return state * np.uint64(25214903917) + np.uint64(11)


@numba.njit(cache=True)
def _sgns(corpus, doc_ptr, syn0, syn1, table, window, negative, alpha0, min_alpha, epochs, seed):
    d = syn0.shape[1]
    n_tokens = corpus.shape[0]
    total = epochs * n_tokens
    losses = np.zeros(epochs)
    neu1e = np.zeros(d, dtype=np.float32)
    state = np.uint64(seed)
    step = 0
    for ep in range(epochs):
        ep_loss = 0.0
        n_pairs = 0
        for doc in range(doc_ptr.shape[0] - 1):
            a = doc_ptr[doc]
            b = doc_ptr[doc + 1]
            for pos in range(a, b):
                alpha = alpha0 - (alpha0 - min_alpha) * step / total
                step += 1
                center = corpus[pos]
                lo = max(a, pos - window)
                hi = min(b, pos + window + 1)
                for cpos in range(lo, hi):
                    if cpos == pos:
                        continue
                    target = corpus[cpos]
                    neu1e[:] = 0.0
                    for k in range(negative + 1):
                        if k == 0:
                            word = target
                            label = 1.0
                        else:
                            state = _next(state)
                            word = table[(state >> np.uint64(16)) % np.uint64(table.shape[0])]
                            if word == target:
                                continue
                            label = 0.0
                        f = 0.0
                        for j in range(d):
                            f += syn0[center, j] * syn1[word, j]
                        if f > 20.0:
                            f = 20.0
                        elif f < -20.0:
                            f = -20.0
                        sig = 1.0 / (1.0 + np.exp(-f))
                        if label == 1.0:
                            ep_loss -= np.log(sig + 1e-12)
                        else:
                            ep_loss -= np.log(1.0 - sig + 1e-12)
                        g = (label - sig) * alpha
                        for j in range(d):
                            neu1e[j] += g * syn1[word, j]
                            syn1[word, j] += g * syn0[center, j]
                    for j in range(d):
                        syn0[center, j] += neu1e[j]
                    n_pairs += 1
        losses[ep] = ep_loss / max(n_pairs, 1)
    return losses


def build_vocabulary(docs: Sequence[Sequence[str]], min_count: int):
    counts: dict[str, int] = {}
    for doc in docs:
        for tok in doc:
            counts[tok] = counts.get(tok, 0) + 1
    first = {t: i for i, t in enumerate(counts)}
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], first[t]))
    return {t: i for i, t in enumerate(kept)}, np.array([counts[t] for t in kept], dtype=np.int64)


def _unigram_table(counts: np.ndarray) -> np.ndarray:
    p = counts.astype(np.float64) ** 0.75
    cdf = np.cumsum(p / p.sum())
    points = (np.arange(_TABLE_SIZE) + 0.5) / _TABLE_SIZE
    return np.minimum(np.searchsorted(cdf, points), counts.size - 1).astype(np.int64)


def train_word2vec(docs: Sequence[Sequence[str]], params: Word2VecParams | None = None) -> EmbeddingModel:
    """Train skip-gram embeddings on token sequences.

    Out-of-vocabulary tokens (count < ``min_count``) are removed before
    windows are formed. The learning rate decays linearly from ``alpha`` to
    ``min_alpha``; mean per-pair loss of every epoch is kept in ``losses``.
    """
    params = params or Word2VecParams()
    vocab, counts = build_vocabulary(docs, params.min_count)
    if not vocab:
        raise DataError("no token reaches min_count; empty vocabulary")
    ids, ptr = [], [0]
    for doc in docs:
        row = [vocab[t] for t in doc if t in vocab]
        ids.extend(row)
        ptr.append(len(ids))
    corpus = np.asarray(ids, dtype=np.int64)
    doc_ptr = np.asarray(ptr, dtype=np.int64)

    rng = np.random.default_rng(params.seed)
    d = params.vector_size
    syn0 = ((rng.random((len(vocab), d)) - 0.5) / d).astype(np.float32)
    syn1 = np.zeros((len(vocab), d), dtype=np.float32)
    losses = _sgns(corpus, doc_ptr, syn0, syn1, _unigram_table(counts), params.window, params.negative,
                   params.alpha, params.min_alpha, params.epochs, params.seed)
    for ep, loss in enumerate(losses):
        log.debug("word2vec epoch %d loss %.5f", ep + 1, loss)
    return EmbeddingModel(vocab, syn0, params, counts, [float(x) for x in losses])


def embed_sequence(tokens: Sequence[str], model: EmbeddingModel, pad_len: int = 14) -> np.ndarray:
    """Concatenate token vectors, zero for unknown tokens, post-padded/truncated to ``pad_len``."""
    d = model.vector_size
    out = np.zeros(pad_len * d, dtype=np.float64)
    for k, tok in enumerate(list(tokens)[:pad_len]):
        row = model.vocabulary.get(tok)
        if row is not None:
            out[k * d:(k + 1) * d] = model.vectors[row]
    return out


def embed_many(docs: Sequence[Sequence[str]], model: EmbeddingModel, pad_len: int = 14) -> np.ndarray:
    d = model.vector_size
    out = np.zeros((len(docs), pad_len * d), dtype=np.float64)
    for i, doc in enumerate(docs):
        for k, tok in enumerate(list(doc)[:pad_len]):
            row = model.vocabulary.get(tok)
            if row is not None:
                out[i, k * d:(k + 1) * d] = model.vectors[row]
    return out
