"""Trend-responsive user segmentation and contextual epsilon-greedy news recommendation."""

__version__ = "0.1.0"
