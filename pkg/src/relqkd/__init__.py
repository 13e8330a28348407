"""Relativistic two-pulse WCP QKD: security calculator and discrete-event simulator."""

__version__ = "0.1.0"
