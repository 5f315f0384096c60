"""Numerical toolkit for the semipositone problem -Δ_{p(x)} u = f(u) - λ.

Modules
-------
exprparse     expression language for p(x, y) and f(t)
varexp        variable-exponent modulars, norms and inequality checks
fem           P1 meshes, functions and the energy functional
semipositone  nonlinearity f, truncation f_λ and hypothesis checks
solvers       torsion, mountain pass, comparison and λ-sweeps
cli           the ``pxlap`` command
"""

from .errors import (CollapsedPath, ConfigError, DomainError, ExprSyntaxError, NoConvergence,
                     NoDescent, PxlapError, UnknownIdentifier)

__version__ = "0.1.0"

__all__ = ["CollapsedPath", "ConfigError", "DomainError", "ExprSyntaxError", "NoConvergence",
           "NoDescent", "PxlapError", "UnknownIdentifier", "__version__"]
