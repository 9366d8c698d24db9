"""
Exception hierarchy for the adaptlab services.

Every error raised deliberately by the services package derives from
``AdaptLabError`` so management commands can convert it into a
``CommandError`` and record it on the experiment run.
"""

from django.core.exceptions import ImproperlyConfigured


class AdaptLabError(Exception):
    """Base class for all laboratory errors."""


class GameDomainError(AdaptLabError, ValueError):
    """Invalid value for a game-domain operation (bad action, empty input, range)."""


class ProtocolError(AdaptLabError):
    """A player callback returned something that is not a legal action."""


class SequencingError(AdaptLabError):
    """Out-of-order stage or an incomplete episode trace."""


class ShapeError(AdaptLabError, ValueError):
    """Dimension mismatch between a tensor and the operation consuming it."""


class TrainingError(AdaptLabError):
    """Training cannot proceed (non-finite gradients, memory too small)."""


class ConfigurationError(AdaptLabError, ImproperlyConfigured):
    """Experiment configuration cannot be resolved into runnable components."""


__all__ = [
    'AdaptLabError',
    'GameDomainError',
    'ProtocolError',
    'SequencingError',
    'ShapeError',
    'TrainingError',
    'ConfigurationError',
]
