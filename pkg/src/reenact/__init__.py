"""Desk-scale single-shot person reenactment toolkit."""

__version__ = "0.1.0"
