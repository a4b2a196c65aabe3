"""Weak-supervision two-stage training and cross-domain transfer evaluation
for binary sentiment classifiers."""

__version__ = "0.1.0"
