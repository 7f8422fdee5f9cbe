"""Desk-scale simulator and control library for autonomous aerial missions."""

__version__ = "0.1.0"
