"""Exception hierarchy shared by every simulator module."""


class PoflError(Exception):
    """Base class for all simulator errors."""


class ParameterError(PoflError, ValueError):
    """Raised when an input violates its documented range or invariant."""


class EquilibriumError(PoflError):
    """Raised when a closed-form strategy is not an equilibrium for the inputs."""


class DegenerateParametersError(PoflError):
    """Raised when a closed form has a zero denominator."""


class ShapeError(PoflError, ValueError):
    """Raised when array or layer shapes do not chain."""


class EmptyShardError(PoflError):
    """Raised when a miner holds no training records."""


class DivergenceError(PoflError):
    """Raised when the training loss becomes non-finite or explodes."""

    def __init__(self, epoch: int, loss: float) -> None:
        """Initialize with the failing epoch and its loss."""
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"Training diverged at epoch {epoch} (loss={loss!r})")


class EncodingError(PoflError):
    """Raised when fixed-point scale tags do not match."""


class HEOverflowError(PoflError):
    """Raised when a value would wrap around the plaintext space."""


class DecryptionError(PoflError):
    """Raised when a ciphertext cannot be decrypted to an in-range value."""


class ProtocolError(PoflError):
    """Raised when a two-party protocol receives an invalid message."""


class MaskReuseError(ProtocolError):
    """Raised when a mask vector is used outside its own session."""


class CorruptCircuitError(PoflError):
    """Raised when no garbled-table row authenticates under the given labels."""


class ChainError(PoflError):
    """Raised for malformed blocks or chain dumps."""


class UnknownPoolError(PoflError, KeyError):
    """Raised when a ledger operation names a pool that was never registered."""

    def __init__(self, pool_id: str) -> None:
        """Initialize with the unknown pool id."""
        self.pool_id = pool_id
        super().__init__(f"Unknown pool '{pool_id}'")


class UsageError(PoflError):
    """Raised for invalid command-line or sweep requests."""


class StageError(PoflError):
    """Raised when a simulation round aborts; names the failing stage."""

    def __init__(self, stage: str, cause: Exception) -> None:
        """Initialize with the stage name and the underlying error."""
        self.stage = stage
        self.cause = cause
        super().__init__(f"Round aborted in stage '{stage}': {cause}")
