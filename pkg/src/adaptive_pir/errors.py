"""Exception hierarchy shared by all modules."""


class PIRError(Exception):
    """Base class for every error raised by this package."""


# finite field
class DivisionByZero(PIRError, ZeroDivisionError):
    pass


class ModulusMismatch(PIRError, ValueError):
    pass


class DuplicateAbscissa(PIRError, ValueError):
    pass


class SingularMatrix(PIRError, ArithmeticError):
    pass


# parameters
class InsufficientServers(PIRError, ValueError):
    pass


class FieldTooSmall(PIRError, ValueError):
    pass


# coding framework
class PoleHit(PIRError, ZeroDivisionError):
    pass


class InsufficientResponses(PIRError):
    pass


class SingularSystem(SingularMatrix):
    """A decoding system turned out singular; parameters are broken."""


class EnumerationTooLarge(PIRError):
    pass


# query array
class ConditionsViolated(PIRError):
    pass


# protocol
class ShapeMismatch(PIRError, ValueError):
    pass


class BadIndex(PIRError, IndexError):
    pass


class OrderViolation(PIRError):
    pass


class InconsistentDecode(PIRError):
    pass


class SOutOfRange(PIRError, ValueError):
    pass


# simulator
class DecodeExhausted(PIRError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(PIRError, ValueError):
    pass
