"""Exception types shared across the package."""

from __future__ import annotations


class InputError(ValueError):
    """Malformed or out-of-domain input."""


class UnknownCapability(InputError, KeyError):
    def __init__(self, label: str) -> None:
        super().__init__(f"unknown capability {label!r}")
        self.label = label

    def __str__(self) -> str:
        return self.args[0]


class NotDerivable(ValueError):
    """A capability is not derivable from the given base or certificate."""


class GateViolation(RuntimeError):
    """A closure intersects the forbidden set where the caller required safety."""


class MissingTemplate(KeyError):
    def __str__(self) -> str:
        return f"no template for capability {self.args[0]!r}"


class RefusalError(ValueError):
    """A diagnostic refuses to run because the instance exceeds its size cap."""


class CorpusParseError(InputError):
    """Schema violation in a corpus or ontology file.

    ``where`` is a JSON path such as ``sessions[2].turns[0].turn_id``; ``line``
    is set when the failure came from the JSON decoder.
    """

    def __init__(self, path: str, where: str, message: str, line: int | None = None) -> None:
        loc = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{loc}: {where}: {message}")
        self.path = path
        self.where = where
        self.line = line


class ConfigError(InputError):
    """Inconsistent experiment or generator parameters."""
