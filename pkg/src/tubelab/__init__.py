"""Thin-tube limits of Dirichlet Laplacians in bent and twisted waveguides."""

__version__ = "0.1.0"
