"""Liouville graph distance and Liouville heat kernel simulation toolkit."""

__version__ = "1.0.0"
