from __future__ import annotations

from typing import Optional


class MidendError(Exception):
    """Base class for every error raised by the toolkit."""

    line: Optional[int] = None


class ParseError(MidendError):
    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column


class VerificationError(MidendError):
    def __init__(self, diagnostics: list) -> None:
        summary = "; ".join(str(d) for d in diagnostics[:3])
        if len(diagnostics) > 3:
            summary += f"; ... ({len(diagnostics)} total)"
        super().__init__(f"module failed verification: {summary}")
        self.diagnostics = diagnostics


class UnknownEntityError(MidendError):
    pass


class ProfileMismatchError(MidendError):
    pass


class TransformError(MidendError):
    pass


class ContractViolation(MidendError):
    pass


class TrapError(MidendError):
    def __init__(self, trap: str) -> None:
        super().__init__(f"program trapped: {trap}")
        self.trap = trap


class IrreducibleLoopError(MidendError):
    pass
