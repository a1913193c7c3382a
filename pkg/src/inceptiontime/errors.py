"""Exception hierarchy shared by every subpackage."""


class InceptionTimeError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(InceptionTimeError, ValueError):
    """An operand has the wrong shape; ``dimension`` names the offending axis."""

    def __init__(self, message: str, dimension: str | None = None):
        super().__init__(message)
        self.dimension = dimension


class ConfigError(InceptionTimeError, ValueError):
    pass


class DataFormatError(InceptionTimeError, ValueError):
    """Malformed dataset or CSV input. ``row``/``column`` are 1-based when known."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class CheckpointError(InceptionTimeError):
    pass


class TrainingError(InceptionTimeError, RuntimeError):
    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None,
                 member: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.member = member
