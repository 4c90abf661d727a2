"""Learning directed acyclic graphs from zero-inflated continuous data."""

__version__ = "0.1.0"
