from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .model import ValidationReport


class BnError(ValueError):
    """Base class for every error raised by bn_kbest."""


class ParseError(BnError):
    def __init__(self, message: str, *, location: str = "") -> None:
        self.location = location
        self.detail = message
        super().__init__(f"{location}: {message}" if location else message)


class NetworkValidationError(BnError):
    def __init__(self, report: ValidationReport) -> None:
        self.report = report
        lines = [f"- {v}" for v in report.problems]
        super().__init__("网络未通过校验:\n" + "\n".join(lines))


class EvidenceError(BnError):
    pass


class StructureError(BnError):
    pass


class InstantiationError(BnError):
    pass


class CapExceededError(BnError):
    def __init__(self, what: str, size: int, cap: int) -> None:
        self.size = size
        self.cap = cap
        super().__init__(f"{what} = {size} 超过上限 {cap}")
