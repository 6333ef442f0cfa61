"""Adaptive control allocation with a sliding-mode outer loop for over-actuated plants."""

__version__ = "0.1.0"
