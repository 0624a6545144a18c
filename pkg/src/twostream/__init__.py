"""Desk-scale toolkit for training and evaluating two-stream action-recognition nets."""

__version__ = "0.1.0"
