"""Exception types shared across the package."""


class FlipAuditError(Exception):
    """Base class for errors raised by this package."""


class SchemaError(FlipAuditError):
    """Schema file malformed, or data/model inconsistent with its schema."""


class CsvParseError(FlipAuditError):
    """A CSV cell or header could not be parsed; message names row/column."""


class IntegrityError(FlipAuditError):
    """A one-hot group or bound invariant would be violated."""


class ModelFormatError(FlipAuditError):
    """Model file malformed or inconsistent with its declared layer sizes."""


class TrainingDivergedError(FlipAuditError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch
