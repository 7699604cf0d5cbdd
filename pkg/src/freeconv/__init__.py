"""Distributions and Brown measures of polynomials in free random variables."""
__version__ = "0.1.0"
