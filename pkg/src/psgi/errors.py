"""Exception types shared across the package."""

from __future__ import annotations

__all__ = [
    "PsgiError",
    "MissingFeatureError",
    "UnknownSignatureError",
    "ParseError",
    "ValidationError",
    "PoolTooSmallError",
    "NoReachableSubtaskError",
    "EpisodeExhaustedError",
    "TooFewEntitiesError",
    "MissingEntityError",
    "DimensionMismatchError",
    "NoEmbeddingError",
    "EmptyTableError",
    "NoEligibleOptionError",
]


class PsgiError(Exception):
    """Base class for all package errors."""


class MissingFeatureError(PsgiError):
    """An expression was evaluated under an incomplete feature assignment."""


class UnknownSignatureError(PsgiError):
    """A graph has no entry for the requested option signature."""


class ParseError(PsgiError):
    """A config or data file does not parse."""


class ValidationError(PsgiError):
    """A parsed config violates an invariant."""


class PoolTooSmallError(PsgiError):
    """An entity pool is smaller than the per-task sample size."""


class NoReachableSubtaskError(PsgiError):
    """Reward assignment found no reachable subtask."""


class EpisodeExhaustedError(PsgiError):
    """The environment was stepped with no episode steps remaining."""


class TooFewEntitiesError(PsgiError):
    """Candidate-attribute generation needs at least two seen entities."""


class MissingEntityError(PsgiError):
    """An embedding file lacks one or more requested entities."""


class DimensionMismatchError(PsgiError):
    """Embedding vectors have inconsistent dimensions."""


class NoEmbeddingError(PsgiError):
    """An entity has no embedding vector."""


class EmptyTableError(PsgiError):
    """Decision-tree fitting was given an empty table."""


class NoEligibleOptionError(PsgiError):
    """A policy was asked to act in a state with no eligible option."""
