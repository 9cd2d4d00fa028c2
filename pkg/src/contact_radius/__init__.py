"""Numerical toolkit for contact metric manifolds: identities, radius bounds and geodesic probes."""

__version__ = "0.1.0"
