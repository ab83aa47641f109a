"""Certified bounds for rank-constrained semidefinite programs."""

__version__ = "0.1.0"
