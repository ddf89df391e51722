"""Exception types raised across the package."""


class TopowalkError(Exception):
    """Base class for all errors raised by topowalk."""


class InvalidParameterError(TopowalkError, ValueError):
    pass


class InvalidSpecError(TopowalkError, ValueError):
    pass


class GapClosedError(TopowalkError, ArithmeticError):
    """The band gap closes, so the winding number is undefined."""


class SingularityError(TopowalkError, ArithmeticError):
    pass


class ResolutionError(TopowalkError, ArithmeticError):
    """Brillouin-zone sampling too coarse to track the phase unambiguously."""


class FitError(TopowalkError, ArithmeticError):
    pass


class SizingError(TopowalkError, RuntimeError):
    """A simulated wavefront reached the end of a finite chain."""


class NormalizationError(TopowalkError, ValueError):
    pass


class NoEdgeStateError(TopowalkError, RuntimeError):
    pass


class MisconfigurationError(TopowalkError, ValueError):
    pass


class ConfigError(TopowalkError, ValueError):
    """Invalid experiment configuration. ``field`` names the offending key."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class InvariantViolation(TopowalkError, RuntimeError):
    """A simulation invariant (norm, chain-end guard, ...) failed."""

    def __init__(self, invariant, detail=""):
        self.invariant = invariant
        super().__init__(f"invariant '{invariant}' violated" + (f": {detail}" if detail else ""))
