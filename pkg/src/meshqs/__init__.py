"""Behavioral-hypothesis query suggestion with meshed encoder states."""

__version__ = "0.1.0"
