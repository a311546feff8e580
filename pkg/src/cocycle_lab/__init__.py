"""Monte Carlo laboratory for defective adapted cocycles of random walks on groups."""

__version__ = "0.1.0"
