"""Joint product attribute prediction and value extraction (generation and classification variants)."""

__version__ = "0.1.0"
