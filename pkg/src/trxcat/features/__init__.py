"""Featurizers: word n-gram TF-IDF and padded Word2Vec embeddings + PCA."""
from .ngrams import NgramConfig, NgramTfidf, extract_ngrams, fit_ngram_tfidf, ngram_transform
from .pca import PcaModel, fit_pca, pca_transform
from .word2vec import EmbeddingModel, Word2VecParams, embed_many, embed_sequence, train_word2vec

__all__ = [
    "NgramConfig", "NgramTfidf", "extract_ngrams", "fit_ngram_tfidf", "ngram_transform",
    "PcaModel", "fit_pca", "pca_transform",
    "EmbeddingModel", "Word2VecParams", "embed_many", "embed_sequence", "train_word2vec",
]
