"""Joint charger placement and pricing under coupled congestion equilibria."""

__version__ = "0.1.0"
