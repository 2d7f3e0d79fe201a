"""Exception hierarchy shared by every fusekit module."""

from __future__ import annotations


class FusekitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(FusekitError, ValueError):
    """Invalid parameters or configuration (bad x, bad t, infeasible spec)."""

    def __init__(self, message: str, key: str | None = None) -> None:
        super().__init__(message)
        self.key = key


class ProfileMismatchError(ConfigError):
    """Profiles do not match the result lists they are applied to."""


class DataError(FusekitError):
    """Input data could not be read or is unusable."""


class ParseError(DataError):
    """A malformed record in a run or qrels stream."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None) -> None:
        self.line = line
        self.source = source
        self.reason = message
        super().__init__(self._render())

    def _render(self) -> str:
        where = []
        if self.source:
            where.append(self.source)
        if self.line is not None:
            where.append(f"line {self.line}")
        return f"{':'.join(where)}: {self.reason}" if where else self.reason


class DuplicateDocumentError(ParseError):
    """The same document appears twice for one topic."""


class InconsistentTagError(ParseError):
    """A run file mixes several run tags."""


class EmptyEvaluationError(DataError):
    """No topic in the ranking has any relevant document in the qrels."""
