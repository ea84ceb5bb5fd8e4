"""Discrete Malliavin calculus on finite Rademacher spaces and multivariate normal approximation bounds."""
__version__ = "0.1.0"
