"""Relay-agent controller synthesis under metric temporal logic specifications."""

__version__ = "0.1.0"
