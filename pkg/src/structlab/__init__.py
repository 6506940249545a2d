"""Desk-scale masked-LM pre-training lab with word-order and sentence-order objectives."""

__version__ = "0.1.0"
