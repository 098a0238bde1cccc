"""Pre-signing EVM transaction risk analysis."""

__version__ = "0.1.0"
