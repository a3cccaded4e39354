"""Exception hierarchy. Everything raised on purpose derives from SketchError."""


class SketchError(Exception):
    pass


class DimensionMismatch(SketchError, ValueError):
    pass


class RankDeficient(SketchError, ArithmeticError):
    pass


class SingularTriangular(SketchError, ArithmeticError):
    pass


class InvalidSparsity(SketchError, ValueError):
    pass


class AllocationTooLarge(SketchError, MemoryError):
    pass


class InvalidDistortion(SketchError, ValueError):
    pass


class InvalidDims(SketchError, ValueError):
    pass


class NegativeArgument(SketchError, ValueError):
    pass


class InvalidResidual(SketchError, ValueError):
    pass


class BreakdownIfZero(SketchError, ArithmeticError):
    """A Krylov basis vector vanished."""


class Divergence(SketchError, ArithmeticError):
    """A gradient iteration blew up; usually the distortion estimate is too low."""

    def __init__(self, message, x=None, report=None):
        super().__init__(message)
        self.x = x
        self.report = report


class UnsupportedFormat(SketchError, ValueError):
    pass


class ConfigError(SketchError, ValueError):
    pass
