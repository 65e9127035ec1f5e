"""Time-dependent PT-symmetric quantum mechanics toolkit."""

__version__ = "0.1.0"

from .errors import NumericalError, PTQMError, ValidationError  # noqa: F401
