"""Exception hierarchy shared by all modules."""


class PRegularityError(Exception):
    """Base class for every error raised by this package."""


class ParseError(PRegularityError, ValueError):
    """Malformed expression text.  ``position`` is a 0-based character offset."""

    def __init__(self, message, text="", position=None):
        self.text = text
        self.position = position
        if position is not None:
            message = f"{message} at position {position}"
            if text:
                message += f"\n  {text}\n  {' ' * position}^"
        super().__init__(message)


class UnknownVariableError(ParseError):
    pass


class ExponentError(ParseError):
    pass


class OrderError(PRegularityError, ValueError):
    """Requested derivative order exceeds the configured maximum."""


class DimensionError(PRegularityError, ValueError):
    pass


class ZeroDirectionError(PRegularityError, ValueError):
    pass


class DecompositionIncomplete(PRegularityError):
    """The subspace chain did not exhaust the codomain before ``p_cap``."""

    def __init__(self, message, achieved=None, subspaces=()):
        super().__init__(message)
        self.achieved = achieved
        self.subspaces = tuple(subspaces)


class SingularFactorMatrix(PRegularityError):
    """The p-factor matrix is singular for the requested direction."""


class NondegenerateKKT(PRegularityError):
    """No weakly active constraints: classical Newton on G already applies."""


class TooFewIterates(PRegularityError, ValueError):
    pass


class ProblemDefinitionError(PRegularityError, ValueError):
    """Bad problem file, unknown built-in name or inconsistent dimensions."""
