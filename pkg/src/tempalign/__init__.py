"""Multilingual temporal expression tagging with adversarially aligned embeddings."""

__version__ = "0.1.0"
