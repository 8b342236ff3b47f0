"""reveval: evaluation toolkit for document-level revision."""

__version__ = "0.1.0"
