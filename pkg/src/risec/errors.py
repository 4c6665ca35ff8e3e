"""Exception hierarchy shared by all compiler stages.

Every error carries the pipeline stage it belongs to so the CLI can emit
structured diagnostics.
"""

from __future__ import annotations


class CompilerError(Exception):
    stage = "internal"

    def __init__(self, message, loc=None):
        super().__init__(message)
        self.message = message
        self.loc = loc  # (line, column) or a human-readable position string

    def __str__(self):
        if isinstance(self.loc, tuple):
            return f"{self.loc[0]}:{self.loc[1]}: {self.message}"
        if self.loc:
            return f"{self.loc}: {self.message}"
        return self.message


class RiseSyntaxError(CompilerError):
    stage = "parse"


class KindError(CompilerError):
    stage = "typecheck"


class InferenceError(CompilerError):
    stage = "typecheck"


class StorageError(InferenceError):
    """A function type ended up inside a data type (functions are not storable)."""


class StrategyError(CompilerError):
    stage = "rewrite"


class FuelExhausted(StrategyError):
    """`repeat` exceeded its fuel; the strategy does not terminate."""


class PhraseError(CompilerError):
    stage = "phrase-check"


class RWMismatch(PhraseError):
    """A read/write annotation does not match its signature slot."""

    def __init__(self, expected, found, loc=None):
        super().__init__(
            f"read/write mismatch: expected {expected}, found {found}"
            + (" (missing toMem?)" if expected == "Rd" and found == "Wr" else ""),
            loc,
        )
        self.expected = expected
        self.found = found


class TranslationError(CompilerError):
    stage = "translate"


class EmitError(CompilerError):
    stage = "emit"


class InterpreterError(CompilerError):
    stage = "run"


class RaceViolation(InterpreterError):
    """Strict mode: two writes hit the same cell inside one parallel for."""
