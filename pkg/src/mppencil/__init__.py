"""Rational interpolation through tridiagonal linear pencils ``zB - A``.

Submodules
----------
core           pencil type, sections, scaling
recurrence     three-term recurrence, convergents, identities
resolvent      section resolvents, decay fits, m-function estimates
markov         pencils for Markov (Cauchy) functions of discrete measures
factorization  LU/UL factors, Christoffel/Geronimus transforms, contours
cli            batch driver
"""

from .core import AT_INFINITY, LinearPoly, NodePoint, TridiagonalPencil, scale_balance, section
from .errors import PencilError
from .markov import DiscreteMeasure, NodePlan, build_markov_pencil
from .recurrence import convergent, eval_table, scaled_table
from .resolvent import m_function

__all__ = [
    "AT_INFINITY",
    "DiscreteMeasure",
    "LinearPoly",
    "NodePlan",
    "NodePoint",
    "PencilError",
    "TridiagonalPencil",
    "build_markov_pencil",
    "convergent",
    "eval_table",
    "m_function",
    "scale_balance",
    "scaled_table",
    "section",
]
__version__ = "0.1.0"
