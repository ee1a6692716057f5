"""Exception family raised by the elegance package.

Every class also derives from the builtin that would otherwise be raised for
the same situation, so callers catching ValueError/RuntimeError keep working.
"""


class EleganceError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(EleganceError, ValueError):
    """Shape or length contract violated by the caller."""


class DomainError(EleganceError, ValueError):
    """Input lies outside the domain of the operation."""


class ConfigError(EleganceError, ValueError):
    """Invalid configuration, mode or dimension pairing."""


class FormatError(EleganceError, ValueError):
    """File contents do not match the expected container format."""


class TrainingError(EleganceError, RuntimeError):
    """Non-finite loss or gradient encountered while training."""


class EmbeddingLookupError(EleganceError, KeyError):
    """Requested text is not present in an embedding table."""


class VerificationError(EleganceError, RuntimeError):
    """A verification step (gradient check, report pairing, coverage) failed."""
