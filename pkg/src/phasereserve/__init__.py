"""Adaptive signal control with RL-chosen phase durations and shock-wave-triggered phase re-service."""

__version__ = "0.1.0"
