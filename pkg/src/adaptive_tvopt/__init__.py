"""Adaptive tracking of time-varying optima for single- and multi-agent systems."""

__version__ = "0.1.0"
