"""Learning-channel training algorithms and their polynomial learning dynamics."""

__version__ = "0.1.0"
