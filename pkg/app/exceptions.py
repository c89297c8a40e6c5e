from typing import Any

class AdmmNetError(Exception):
    """Base exception for errors raised by the radar imaging / ADMM-Net application."""
    def __init__(self, message="An error occurred in the ADMM-Net application.", details: Any = None):
        super().__init__(message)
        self.details = details



class DomainError(AdmmNetError):
    """Raised when an argument lies outside the mathematical domain of an operation
    (e.g. a delay offset beyond T/2 or a velocity beyond v_max)."""
    pass

class DimensionMismatchError(AdmmNetError):
    """Raised when shapes of networks, dictionaries and data do not agree."""
    pass

class InvalidConfigurationError(AdmmNetError):
    """Raised when a config file is missing, is not valid YAML, or a field fails validation."""
    pass

class MissingRequiredDataError(AdmmNetError):
    """Raised when mandatory fields are absent from an otherwise *validly structured* config file."""
    pass

class UnhandledExperimentKindError(AdmmNetError):
    """Raised when an experiment kind or stopping mode is recognised syntactically but not handled."""
    pass

class SolverError(AdmmNetError):
    """Raised when a numerical kernel fails internally (e.g. a factorization that cannot fail for rho > 0)."""
    pass

class TrainingDivergenceError(AdmmNetError):
    """Raised when the training loss becomes non-finite. `details["history"]` holds the history so far."""
    pass

class ArtifactError(AdmmNetError):
    """Base exception for errors when persisting or loading artifacts (dictionaries, datasets, checkpoints, reports)."""
    pass

class ArtifactIOError(ArtifactError):
    """Raised when an artifact cannot be read or written, or fails its format / hash checks."""
    pass

class MissingCheckpointError(ArtifactError):
    """Raised when a referenced network checkpoint does not exist."""
    pass

class AcceptanceError(AdmmNetError):
    """Raised when at least one acceptance bound of an experiment is violated."""
    pass
