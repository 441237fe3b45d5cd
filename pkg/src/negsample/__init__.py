"""Negative sampling for span-based NER under missing annotations."""

__version__ = "0.1.0"
