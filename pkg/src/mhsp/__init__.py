"""Neural-network surrogates for multi-horizon stochastic capacity planning."""

__version__ = "0.1.0"
