"""Exception hierarchy shared by all pxlap modules."""


class PxlapError(Exception):
    """Base class for every error raised by this package."""


# -- expressions -------------------------------------------------------------

class ExprSyntaxError(PxlapError, ValueError):
    """Malformed expression text.

    Attributes
    ----------
    offset : int
        Byte offset (UTF-8) into the source where parsing failed.
    expected : str
        Human readable description of what the parser wanted.
    """

    def __init__(self, offset, expected, src=None):
        self.offset = offset
        self.expected = expected
        self.src = src
        super().__init__(f"syntax error at byte {offset}: expected {expected}")


class UnknownIdentifier(PxlapError, ValueError):
    def __init__(self, name, offset=None):
        self.name = name
        self.offset = offset
        where = "" if offset is None else f" at byte {offset}"
        super().__init__(f"unknown identifier {name!r}{where}")


class DomainError(PxlapError, ArithmeticError):
    """Evaluation left the domain of an operation (log of x <= 0, 1/0, ...)."""


# -- function spaces / meshes ------------------------------------------------

class InvalidSize(PxlapError, ValueError):
    pass


class MeshMismatch(PxlapError, ValueError):
    pass


class NonFinite(PxlapError, ArithmeticError):
    pass


class NonZeroTrace(PxlapError, ValueError):
    pass


class ExponentOutOfRange(PxlapError, ValueError):
    pass


class DegenerateInput(PxlapError, ValueError):
    pass


# -- solvers -----------------------------------------------------------------

class NoConvergence(PxlapError, RuntimeError):
    def __init__(self, message, iterations=None, residual=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(message)


class NoDescent(PxlapError, RuntimeError):
    pass


class CollapsedPath(PxlapError, RuntimeError):
    """The path maximum slid onto an endpoint or dropped below zero energy."""


# -- configuration -----------------------------------------------------------

class ConfigError(PxlapError, ValueError):
    def __init__(self, key, reason):
        self.key = key
        self.reason = reason
        super().__init__(f"{key}: {reason}" if key else reason)
