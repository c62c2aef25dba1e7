"""Numerical laboratory for weighted Sobolev identities and inequalities of non-divergent elliptic operators."""

__version__ = "0.1.0"
