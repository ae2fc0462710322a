from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from termpress.schemas import RuleValidationReport


class TermpressError(Exception):
    """Base class for every error raised by termpress."""


class RuleParseError(TermpressError):
    def __init__(self, message: str, field: str | None = None) -> None:
        self.field = field
        prefix = f"{field}: " if field else ""
        super().__init__(f"{prefix}{message}")


class RuleValidationError(TermpressError):
    def __init__(self, report: RuleValidationReport) -> None:
        self.report = report
        details = "; ".join(
            f"{entry.field} ({entry.kind.value}): {entry.message}"
            for entry in report.entries
            if entry.fatal
        )
        super().__init__(f"rule {report.rule_id!r} is invalid: {details}")


class PoolError(TermpressError):
    pass


class PoolFileMissingError(PoolError):
    def __init__(self, path: str) -> None:
        self.path = path
        super().__init__(f"pool file not found: {path}")


class PoolCorruptError(PoolError):
    def __init__(self, path: str, message: str, offset: int | None = None) -> None:
        self.path = path
        self.offset = offset
        where = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"corrupt pool file {path}{where}: {message}")


class PoolSchemaError(PoolError):
    def __init__(self, path: str, found: object, expected: int) -> None:
        self.path = path
        self.found = found
        self.expected = expected
        super().__init__(
            f"pool file {path} has schema_version {found!r}, expected {expected}"
        )


class GatewayError(TermpressError):
    transient = False


class GatewayTimeoutError(GatewayError):
    transient = True


class GatewayAuthError(GatewayError):
    pass


class GatewayRateLimitError(GatewayError):
    transient = True


class GatewayTransportError(GatewayError):
    transient = True


class MockTranscriptMissError(GatewayError):
    pass


class PromptBindingError(TermpressError):
    def __init__(self, placeholder: str, message: str | None = None) -> None:
        self.placeholder = placeholder
        super().__init__(message or f"missing binding for placeholder {{{placeholder}}}")


class ResponseParseError(TermpressError):
    def __init__(self, message: str, raw: str) -> None:
        self.raw = raw
        super().__init__(message)


class TrajectoryError(TermpressError):
    def __init__(self, path: str, message: str, line: int | None = None) -> None:
        self.path = path
        self.line = line
        where = f":{line}" if line is not None else ""
        super().__init__(f"{path}{where}: {message}")
