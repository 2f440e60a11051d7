"""Distribution-aware weighted block-sparse recovery."""

__version__ = "0.1.0"
