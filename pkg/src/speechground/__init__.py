"""speechground: learn to map speech audio to semantic sentence embeddings
and measure learnability differences between speech registers."""

from . import autograd, corpus, embeddings, encoder, features, retrieval, training

__all__ = [
    "autograd",
    "corpus",
    "embeddings",
    "encoder",
    "features",
    "retrieval",
    "training",
]

__version__ = "0.1.0"
