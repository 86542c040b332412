"""Exception types shared across the package."""


class MarketError(Exception):
    """Base class for all package-specific errors."""


class StructureError(MarketError):
    """Sparse structure or dimension corruption (bad offsets, mismatched lengths)."""


class ParseError(MarketError):
    """Malformed input file. Carries the offending line number when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        loc = ""
        if path is not None:
            loc = f"{path}: "
        if line is not None:
            loc += f"line {line}: "
        super().__init__(loc + message)


class ValidationError(MarketError):
    """Instance data violates a solvability invariant."""


class SubproblemError(MarketError):
    """Row subproblem search failed to converge; indicates broken monotonicity."""


class OracleUnavailable(MarketError):
    """A ground-truth oracle could not reach its target accuracy."""
