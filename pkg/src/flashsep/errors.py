"""Exception hierarchy shared across the toolkit."""


class FlashSepError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(FlashSepError):
    """Invalid metadata or configuration (e.g. white level <= black level)."""


class DataError(FlashSepError):
    """Invalid image data: dimension mismatch, bad range, missing files."""


class FormatError(DataError):
    """Malformed file. Carries the byte offset where parsing failed, if known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ContractError(FlashSepError):
    """An estimator's declared inputs violate the pipeline wiring rules."""


class StageError(FlashSepError):
    """An external estimator process failed or timed out."""
