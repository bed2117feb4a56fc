"""Exception hierarchy. ``exit_code`` is what the CLI returns for each class."""


class IotwmError(Exception):
    exit_code = 3


class ParameterError(IotwmError, ValueError):
    pass


class FormatError(IotwmError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InsufficientDataError(IotwmError, ValueError):
    pass


class ShapeError(IotwmError, ValueError):
    pass


class StateError(IotwmError, RuntimeError):
    pass


class TrainingDivergedError(IotwmError, RuntimeError):
    pass


class InfeasibleError(IotwmError):
    """No parameter choice / strategy satisfies the constraints.

    ``constraint`` names the binding constraint (e.g. ``"attacker-error"``).
    """

    exit_code = 4

    def __init__(self, message, constraint=None):
        super().__init__(message)
        self.constraint = constraint


class TooLargeError(IotwmError):
    """Exact solution would need to materialise too many strategies; use
    fictitious play instead."""


class TransportError(IotwmError, ConnectionError):
    """A connection could not be established or was lost."""
