"""Located diagnostics shared by every stage of the pipeline."""

from __future__ import annotations

import bisect


class Located(Exception):
    """An error pinned to a byte offset in some source buffer."""

    stage = "error"

    def __init__(self, message: str, offset: int = 0, source: bytes | None = None):
        super().__init__(message)
        self.message = message
        self.offset = offset
        self.line, self.column = line_col(source, offset) if source is not None else (0, 0)

    def __str__(self) -> str:
        if self.line:
            return f"{self.line}:{self.column}: {self.stage}: {self.message}"
        return f"{self.stage}: {self.message}"


class LexError(Located):
    stage = "lexical error"


class ParseError(Located):
    stage = "syntax error"


class PreprocessError(Located):
    stage = "preprocess error"


class CheckError(Located):
    stage = "type error"


class KernelRuntimeError(Located):
    """Raised while interpreting a program; carries a call-stack trace."""

    stage = "runtime error"

    def __init__(self, message, offset=0, source=None):
        super().__init__(message, offset, source)
        self.trace: list[str] = []

    def __str__(self) -> str:
        text = super().__str__()
        if self.trace:
            text += "".join(f"\n  in {frame}" for frame in self.trace)
        return text


def line_col(source: bytes, offset: int) -> tuple[int, int]:
    """1-based line and byte column of ``offset``."""
    offset = max(0, min(offset, len(source)))
    starts = _line_starts(source)
    row = bisect.bisect_right(starts, offset) - 1
    return row + 1, offset - starts[row] + 1


def _line_starts(source: bytes) -> list[int]:
    starts = [0]
    pos = source.find(b"\n")
    while pos != -1:
        starts.append(pos + 1)
        pos = source.find(b"\n", pos + 1)
    return starts
