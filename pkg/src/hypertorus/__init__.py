"""Exterior calculus and co-invariant cohomology on the hyperbolic torus T^3_A."""

__version__ = "0.1.0"
