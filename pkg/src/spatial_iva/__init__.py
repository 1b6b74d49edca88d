"""Informed independent vector analysis with spatial priors."""

__version__ = "0.1.0"
