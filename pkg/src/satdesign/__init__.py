"""Design and analysis of saturation experiments under network interference."""

__version__ = "0.1.0"
