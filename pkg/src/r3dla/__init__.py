"""Trace-driven simulator of a decoupled look-ahead microarchitecture."""

__version__ = "0.1.0"
