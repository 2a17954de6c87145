"""Shared exception types."""


class ContractError(ValueError):
    """An operation was called outside its documented contract."""


class MissingStageError(RuntimeError):
    """A pipeline command ran before its prerequisite stage produced artifacts."""


class DataCorruptionError(RuntimeError):
    """A persisted record failed validation while loading."""
