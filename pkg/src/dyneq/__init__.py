"""Verification of dynamic equivalences between control systems.

The modules build on each other: ``symexpr`` (expressions and randomized
zero tests), ``jetspace`` (systems, prolongations, contact forms),
``equivmap`` (candidate maps and their checks), ``blockmat`` (coefficient
blocks of pulled-back contact forms), ``rankmatrix`` (the rank matrix and its
constraints) and ``feasibility`` (integer-side height analysis).
"""

from .errors import DyneqError

__version__ = "0.1.0"

__all__ = ["DyneqError", "__version__"]
