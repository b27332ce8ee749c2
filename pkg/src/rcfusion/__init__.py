"""Reliable classifier fusion with the analytic evidential reasoning rule."""

__version__ = "0.1.0"
