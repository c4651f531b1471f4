"""Ensemble deep-representation attack detector for ICS telemetry."""

__version__ = "0.1.0"
