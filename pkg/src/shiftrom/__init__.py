"""Shifted-snapshot residual-minimization ROMs with adaptive reduced meshes."""

__version__ = "0.1.0"
