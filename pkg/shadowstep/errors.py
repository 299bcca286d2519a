"""Exception hierarchy shared across all layers."""

from __future__ import annotations

from typing import Optional


class ShadowstepError(Exception):
    """Root of every error raised by this package."""


class DomainError(ShadowstepError, ValueError):
    """Invalid physical input: coincident particles, bad masses, bad shapes."""

    def __init__(self, message: str, pair: Optional[tuple[int, int]] = None) -> None:
        super().__init__(message)
        self.pair = pair


class ConfigurationError(ShadowstepError, ValueError):
    """Invalid builder parameter or run configuration."""

    def __init__(self, message: str, field: Optional[str] = None) -> None:
        super().__init__(message)
        self.field = field


class SchemeError(ShadowstepError):
    """Inconsistent or malformed splitting scheme."""


class SeriesError(ShadowstepError, ArithmeticError):
    """Precondition violated by a truncated series operation."""


class IntegrationError(ShadowstepError):
    """A domain error raised while stepping a scheme."""

    def __init__(self, message: str, scheme: str, step_index: int) -> None:
        super().__init__(f"{message} (scheme={scheme}, step={step_index})")
        self.scheme = scheme
        self.step_index = step_index
