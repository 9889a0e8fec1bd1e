"""Galerkin boundary-element electrostatics on non-conforming patch meshes."""

__version__ = "0.1.0"
