"""Exception hierarchy shared by every leapmood module.

Input problems (bad files, unknown labels, version mismatches) derive from
:class:`InputError`; numeric blow-ups derive from :class:`NumericError`.
The command-line front end maps the two families to distinct exit codes.
"""

from __future__ import annotations


class LeapMoodError(Exception):
    """Base class for all package errors."""


class InputError(LeapMoodError, ValueError):
    """Malformed or inconsistent input data."""


class CorpusFormatError(InputError):
    """A dataset file violates its documented layout.

    ``line`` is 1-based: the physical line for DailyDialog files and the data
    row (header excluded) for chat CSV files.
    """

    def __init__(self, message: str, *, path=None, line: int | None = None):
        self.path = None if path is None else str(path)
        self.line = line
        where = []
        if self.path is not None:
            where.append(self.path)
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ModelFormatError(InputError):
    """A serialized model or vocabulary file cannot be read back."""

    def __init__(self, message: str, *, tensor: str | None = None):
        self.tensor = tensor
        super().__init__(message if tensor is None else f"tensor {tensor!r}: {message}")


class FingerprintMismatch(InputError):
    """The vocabulary on disk is not the one a model was trained with."""


class NumericError(LeapMoodError, FloatingPointError):
    """A computation produced NaN or infinite values."""


class EvaluatorError(LeapMoodError):
    """A fitness evaluation failed; carries the offending chromosome."""

    def __init__(self, message: str, chromosome=None, history=None):
        self.chromosome = chromosome
        self.history = history if history is not None else []
        super().__init__(f"{message} (chromosome={chromosome!r})")
