"""Cardiac-region-aware segmentation of short-axis cine CMR stacks."""

__version__ = "0.1.0"
