"""Numerical harness for overdetermined Pucci-type problems on space forms.

Submodules: ``geometry`` (charts, Christoffel symbols, distances),
``pucci`` (extremal operators and comparison inequalities), ``radial``
(shooting on geodesic balls), ``cone`` (homogeneous cone solutions),
``grid`` (wide-stencil Howard solver), ``movingplane`` (symmetry sweep)
and ``cli``.
"""

from ._accel import backend
from .errors import (ArgumentError, BracketError, ConsistencyError, ConvergenceError,
                     DegenerateDomainError, DomainError, InfeasibilityError, NumericalError,
                     PucciSerrinError, ResolutionError, ValidationError)
from .geometry import Kind, SpaceForm
from .pucci import MINUS, PLUS, PucciParams

__version__ = "0.1.0"

__all__ = [
    "ArgumentError", "BracketError", "ConsistencyError", "ConvergenceError",
    "DegenerateDomainError", "DomainError", "InfeasibilityError", "Kind", "MINUS",
    "NumericalError", "PLUS", "PucciParams", "PucciSerrinError", "ResolutionError",
    "SpaceForm", "ValidationError", "backend",
]
