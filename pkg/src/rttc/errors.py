"""Exception hierarchy shared across the package."""


class RttcError(Exception):
    """Base class for all domain errors raised by this package."""


class ZeroVector(RttcError):
    """Raised when a vector cannot be normalized (zero norm or non-finite)."""


class DimMismatch(RttcError):
    """Raised when two vectors or a vector and an index disagree on dimension."""


class MalformedRecord(RttcError):
    """Raised for knowledge-base records with empty required fields."""


class EmptyLog(RttcError):
    """Raised when a retrieval log is empty but a distribution was requested."""


class EmptyText(RttcError):
    """Raised when an empty string is handed to the embedder."""


class EmptySampleSet(RttcError):
    """Raised when an operation requires at least one retrieved sample."""


class EmptyRetrieval(RttcError):
    """Raised when the knowledge base returns zero samples on the adapted path."""


class EmptyInput(RttcError):
    """Raised when an aggregate is requested over an empty collection."""


class BackendUnavailable(RttcError):
    """Raised when a remote backend cannot be reached or times out."""


class NonFiniteReward(RttcError):
    """Raised when a scorer produces NaN or infinity."""


class InvalidFractions(RttcError):
    """Raised for routing fractions outside [0, 1] or summing above 1."""


class UnknownStage(RttcError):
    """Raised when a cost event names a stage the ledger does not price."""


class ConfigError(RttcError):
    """Raised for invalid or unparseable run configuration."""


class IoError(RttcError):
    """Raised for unreadable or unwritable input/output paths."""
