"""State-vector simulator of a double-slit von Neumann measurement chain."""

__version__ = "0.1.0"
