"""Calculus of branching mechanisms, pruning families of Levy trees,
Galton-Watson approximation samplers and Monte Carlo law verification."""

from levytree.mechanism import (
    DomainError,
    GammaDensity,
    Mechanism,
    NumericError,
    PointMass,
)

__all__ = [
    "DomainError",
    "GammaDensity",
    "Mechanism",
    "NumericError",
    "PointMass",
]
