"""Exception hierarchy shared by every certsmooth module."""

from __future__ import annotations


class CertSmoothError(Exception):
    """Base class; `exit_code` is what the CLI returns for this category."""
    exit_code = 1


class InvalidArgumentError(CertSmoothError, ValueError):
    """A precondition on an operation's arguments was violated."""
    pass


class ConfigurationError(CertSmoothError):
    """Invalid configuration or incompatible artifacts."""
    pass


class OverwriteRefusedError(CertSmoothError):
    """Output already exists and --force was not given."""
    pass


class ArtifactMissingError(CertSmoothError):
    """A referenced input artifact does not exist."""
    exit_code = 2


class FormatError(CertSmoothError):
    """Malformed artifact file."""
    exit_code = 3

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class TrainingDivergedError(CertSmoothError):
    """Loss became non-finite during training."""
    exit_code = 4

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(
            f"Training diverged at epoch {epoch}, batch {batch} (loss={loss})"
        )
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class CheckpointError(CertSmoothError):
    """I/O failure during a resumable run; the partial file can be resumed."""
    exit_code = 5

    def __init__(self, last_completed_id: int | None, cause: Exception):
        where = "none" if last_completed_id is None else str(last_completed_id)
        super().__init__(
            f"Checkpoint write failed (last completed id: {where}): {cause}. "
            "Rerun with --resume to continue."
        )
        self.last_completed_id = last_completed_id


class OutputWriteError(CertSmoothError):
    """Reading or writing an artifact failed at the operating-system level."""
    exit_code = 6

    def __init__(self, cause: OSError):
        super().__init__(f"I/O failure: {cause}")
        self.cause = cause
