"""Privacy-preserving collaborative consumption protocols over Paillier encryption."""

__version__ = "0.1.0"
