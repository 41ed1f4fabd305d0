"""Finite elements and time integrators for parabolic problems with
dynamic (Wentzell / bulk-surface) boundary conditions."""

__version__ = "0.1.0"
