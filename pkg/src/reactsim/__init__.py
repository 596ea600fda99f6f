"""Trace-driven simulator for batteryless energy buffers."""

__version__ = "0.1.0"
