"""Water distribution network flow solver and tank design optimizer."""

__all__ = ["__version__"]

__version__ = "0.1.0"
