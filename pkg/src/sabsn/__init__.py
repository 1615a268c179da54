"""Self-adaptive body sensor network simulator."""

__version__ = "0.1.0"
