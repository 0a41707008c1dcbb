"""Tropical cyclone track and intensity forecast verification."""

__version__ = "0.1.0"
