"""Exception types raised by the library."""


class TTError(ValueError):
    """Base class for invalid tensor-train inputs."""


class EmptyCoreList(TTError):
    pass


class RankChainMismatch(TTError):
    pass


class BoundaryRankNotOne(TTError):
    pass


class InvalidRankChain(TTError):
    pass


class InvalidRanks(TTError):
    pass


class ModeSizeMismatch(TTError):
    pass


class EmptyTermList(TTError):
    pass


class DenseTooLarge(TTError):
    pass


class IndexOutOfRange(TTError, IndexError):
    pass


class NotLeftOrthogonal(TTError):
    pass


class InvalidGrid(TTError):
    pass


class FormatError(TTError):
    """Malformed TTF1 file."""


class SVDFailure(ArithmeticError):
    pass


class Breakdown(ArithmeticError):
    """Arnoldi produced a vector of (numerically) zero norm."""
