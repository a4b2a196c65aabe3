"""Frozen sentence-embedding exporter producing WSEB files."""

__version__ = "0.1.0"
