"""Exception hierarchy shared across the package."""

from __future__ import annotations


class LexalignError(Exception):
    """Base class for all lexalign errors."""


class ConfigError(LexalignError):
    """Invalid configuration value or conflicting options (CLI exit code 2)."""


class ParseError(LexalignError):
    """Malformed input file."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix += str(path)
        if line is not None:
            prefix += f":{line}"
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ContractViolation(LexalignError):
    """An operation was handed input that violates its precondition."""


class NumericalFailure(LexalignError):
    """A numerical routine failed to converge."""

    def __init__(self, message: str, condition_estimate: float = float("inf")):
        self.condition_estimate = condition_estimate
        super().__init__(f"{message} (condition estimate {condition_estimate:.3e})")


class StageError(LexalignError):
    """A pipeline stage could not proceed."""

    def __init__(self, message: str, stage: str | None = None, iteration: int | None = None):
        self.stage = stage
        self.iteration = iteration
        bits = []
        if stage:
            bits.append(f"stage={stage}")
        if iteration is not None:
            bits.append(f"iteration={iteration}")
        suffix = f" [{', '.join(bits)}]" if bits else ""
        super().__init__(message + suffix)
