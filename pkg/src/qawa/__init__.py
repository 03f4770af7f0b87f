"""Data augmentation toolkit for low-resource agglutinative-language ASR."""

__version__ = "0.1.0"
