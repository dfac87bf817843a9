"""Monte Carlo and exact tools for products of random matrices over R and Q_p."""

__version__ = "0.1.0"
