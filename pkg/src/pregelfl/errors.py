"""Exception types shared across the package."""


class PregelFLError(Exception):
    """Base class for all package errors."""


class ValidationError(PregelFLError, ValueError):
    """Input violates a documented precondition."""


class ParseError(ValidationError):
    """Malformed input file; ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class InfeasibleError(PregelFLError):
    """Some client cannot reach any facility."""

    def __init__(self, message: str, vertex: int | None = None):
        self.vertex = vertex
        super().__init__(message)


class NonConvergenceError(PregelFLError):
    """A loop hit its safety cap before reaching quiescence."""


class ContractError(PregelFLError):
    """An object was used in a state its contract forbids."""


class ConfigurationError(PregelFLError):
    """Engine or program misconfiguration (e.g. an unknown phase name)."""
