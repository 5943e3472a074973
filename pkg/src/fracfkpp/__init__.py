"""Fractional Fisher-KPP numerics: stable kernels, linear flow, time stepping, fronts."""

__version__ = "0.1.0"
