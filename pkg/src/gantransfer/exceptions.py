"""Exception hierarchy shared across the package."""


class GanTransferError(Exception):
    """Base class for all errors raised by gantransfer."""


class ValidationError(GanTransferError, ValueError):
    """Invalid argument, specification or input shape."""


class NumericDomainError(GanTransferError, ValueError):
    """A matrix or value lies outside the domain an operation supports."""


class CheckpointError(GanTransferError):
    """Base class for checkpoint load failures."""


class CheckpointVersionError(CheckpointError):
    pass


class ChecksumMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class TransferError(GanTransferError):
    """A source checkpoint cannot initialize the requested target network."""


class TrainingDivergedError(GanTransferError, FloatingPointError):
    """Raised when a loss becomes non-finite.

    ``snapshot`` holds the iteration, the loss values and the gradient norms
    observed at the failing step.
    """

    def __init__(self, message, snapshot):
        super().__init__(message)
        self.snapshot = snapshot
