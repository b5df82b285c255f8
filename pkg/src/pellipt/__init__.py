"""Numerical tools for p-ellipticity, Bellman-function convexity and L^p
semigroup experiments for complex divergence-form operators with first-order
terms and a potential."""

__version__ = "0.1.0"
