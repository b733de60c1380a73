"""Error types shared across the package.

Each error maps to a CLI exit code (see ``be_lab.cli``).
"""


class BeLabError(Exception):
    """Base class for all package errors; `detail` carries an optional report."""

    exit_code = 1

    def __init__(self, message="", detail=None):
        super().__init__(message)
        self.detail = detail


class InvalidParameterError(BeLabError, ValueError):
    exit_code = 2


class InvalidStateError(InvalidParameterError):
    pass


class InsufficientDataError(InvalidParameterError):
    pass


class DegenerateSpectrumError(BeLabError, ValueError):
    exit_code = 2


class ResourceLimitError(BeLabError, MemoryError):
    exit_code = 2


class WindowViolationError(BeLabError, ValueError):
    """A parameter window (l, M, K, omega) is empty or violated."""

    exit_code = 3

    def __init__(self, message, failed=None, detail=None):
        super().__init__(message, detail)
        self.failed = list(failed or [])


class EnvelopeInapplicableError(WindowViolationError):
    pass


class CertificateViolationError(BeLabError):
    """A proven inequality or identity was numerically falsified."""

    exit_code = 4
