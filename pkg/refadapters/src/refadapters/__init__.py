"""Adapter scripts wrapping real codecs and extractors for the tilebench protocol."""

__version__ = "0.1.0"
