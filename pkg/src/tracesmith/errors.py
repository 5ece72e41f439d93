"""Exception hierarchy shared across the package.

Every failure raised by library code derives from :class:`TracesmithError`
so the CLI can map errors onto its stable exit-code table.
"""
from __future__ import annotations


class TracesmithError(Exception):
    """Base class for all tracesmith errors."""


class FormatError(TracesmithError):
    """Input could not be parsed or violates a documented file schema."""


class ProviderFailure(TracesmithError):
    """A remote completion/embedding call failed or returned garbage."""


class SimulationError(TracesmithError):
    """Fixture-site execution could not proceed."""
