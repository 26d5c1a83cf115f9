"""Exact finite models of tree systems of cut pairs and of combination graphs."""

__version__ = "0.1.0"
