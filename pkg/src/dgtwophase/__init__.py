"""hp-adaptive discontinuous Galerkin solver for two-phase flow in porous media."""
__version__ = "0.1.0"
