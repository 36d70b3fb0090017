"""Higher-order learning dynamics that stabilize mixed-strategy Nash equilibria."""

__version__ = "0.1.0"
