"""Exception types shared across the toolkit."""


class ImpulsiveMPError(Exception):
    """Base class for all toolkit errors."""


class MalformedBracket(ImpulsiveMPError):
    """Bracket text does not follow the grammar B ::= Xj | [B,B]."""


class NonConsecutiveSeq(ImpulsiveMPError):
    """Leaf indices read left to right are not consecutive increasing."""


class NotASubbracket(ImpulsiveMPError):
    """Path does not address a node of the bracket."""


class LengthOne(ImpulsiveMPError):
    """Single leaves do not factor."""


class ParseError(ImpulsiveMPError):
    """Text input rejected; carries line and column."""

    def __init__(self, message, line=1, col=1):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class EvalDomain(ImpulsiveMPError):
    """Expression evaluated at a singular point (division by zero, log of a nonpositive value)."""


class DimensionMismatch(ImpulsiveMPError):
    """Operands live in different state spaces."""


class InsufficientSmoothness(ImpulsiveMPError):
    """A field's declared differentiability class is below what the bracket needs."""


class ConeViolation(ImpulsiveMPError):
    """Control value outside R_+ x C."""


class DegenerateSpeed(ImpulsiveMPError):
    """w0 + |w| vanishes on a piece, so arc-length reparameterization is singular."""


class BlowUp(ImpulsiveMPError):
    """State norm exceeded the configured bound during integration."""


class GridMismatch(ImpulsiveMPError):
    """Sample grids that must coincide do not."""


class EpsilonTooLarge(ImpulsiveMPError):
    """Variation window does not fit inside (0, s_bar]."""


class IndexOutOfC1(ImpulsiveMPError):
    """Bracket leaf assigned to a control component without a free sign."""


class OverlappingWindows(ImpulsiveMPError):
    """Composed variations must occupy pairwise disjoint windows."""


class DegenerateLadder(ImpulsiveMPError):
    """Order estimation needs at least four strictly decreasing epsilons."""


class HypothesisViolated(ImpulsiveMPError):
    """A structural hypothesis required by the requested check fails."""
