"""Exception types raised across the package."""


class PencilError(Exception):
    """Base class for all pencil-related failures."""


class OrderTooLarge(PencilError, ValueError):
    pass


class ZeroScaleFactor(PencilError, ValueError):
    pass


class NodeCollision(PencilError, ZeroDivisionError):
    """The evaluation point is a root of some alpha polynomial."""

    def __init__(self, k, message=None):
        self.k = k
        super().__init__(message or f"evaluation point is a root of alpha_{k}")


class PoleAtPoint(PencilError, ZeroDivisionError):
    pass


class BackwardBreakdown(PencilError, ZeroDivisionError):
    def __init__(self, level):
        self.level = level
        super().__init__(f"zero tail denominator at level {level}")


class IllConditionedB(PencilError, ArithmeticError):
    pass


class SingularSection(PencilError, ArithmeticError):
    pass


class AtomHit(PencilError, ZeroDivisionError):
    pass


class RealNode(PencilError, ValueError):
    pass


class Terminated(PencilError):
    """The measure has collapsed to a single atom; the fraction is finite.

    ``Bjj`` and ``Ajj`` carry the last diagonal entries so callers can
    close the pencil.
    """

    def __init__(self, Bjj, Ajj):
        self.Bjj = Bjj
        self.Ajj = Ajj
        super().__init__(f"measure reduced to a single atom (B_jj={Bjj!r})")


class NegativeWeight(PencilError, ArithmeticError):
    pass


class NotPositiveDefinite(PencilError, ArithmeticError):
    pass


class ZeroPivot(PencilError, ZeroDivisionError):
    def __init__(self, k):
        self.k = k
        super().__init__(f"q_{k} vanishes at the factorization point")


class ZeroY(PencilError, ZeroDivisionError):
    def __init__(self, k):
        self.k = k
        super().__init__(f"y_{k} vanishes at the factorization point")


class GeometryViolation(PencilError, ValueError):
    pass


class CoincidentPoints(PencilError, ValueError):
    pass


class SingularBDet(PencilError, ArithmeticError):
    pass


class ConfigError(PencilError, ValueError):
    pass


class NoStabilization(UserWarning):
    """Selected convergents did not settle within tolerance (non-fatal)."""
