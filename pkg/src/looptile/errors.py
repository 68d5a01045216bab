"""Exception types shared across the package."""


class InvalidChainError(ValueError):
    """A loop chain failed validation (dangling refs, bad descriptor, empty loops)."""


class DepthExceededError(InvalidChainError):
    """More loops requested for fusion than the halo depth supports."""


class InspectionError(RuntimeError):
    """The inspector could not build a legal schedule for the given chain."""


class ColoringLimitError(InspectionError):
    """Recoloring rounds exceeded the termination guard."""


class ExecutionError(RuntimeError):
    """A kernel binding or executor precondition was violated."""


class StaleScheduleError(ExecutionError):
    """Schedule fingerprint does not match the chain being executed."""


class PartitionBugError(RuntimeError):
    """Internal inconsistency in rank-local meshes (asymmetric tables, overlapping owners)."""


class VerificationError(RuntimeError):
    """Tiled and untiled runs disagree."""
