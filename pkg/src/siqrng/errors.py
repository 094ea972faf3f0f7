"""Exception types shared across the package.

Every error carries a short machine-readable ``category`` that the CLI maps
to a nonzero exit code, so scripted callers can branch on failure class
without parsing messages.
"""

from __future__ import annotations


class SiqrngError(Exception):
    """Base class for all package errors."""

    category = "error"
    exit_code = 1


class ConfigError(SiqrngError):
    """Invalid configuration file, CLI argument, or parameter combination."""

    category = "config"
    exit_code = 2


class RecordError(SiqrngError):
    """Counts record fails its schema or a counting invariant."""

    category = "record"
    exit_code = 3


class InfeasibleAttackError(SiqrngError):
    """Blinding strategy has an empty intensity window or broken premise."""

    category = "attack-infeasible"
    exit_code = 4


class InsufficientTestDataError(SiqrngError):
    """No usable test-basis rounds, so the error rate is undefined."""

    category = "insufficient-test-data"
    exit_code = 5


class NoExtractableRoundsError(SiqrngError):
    """No single-click generation rounds, so nothing can be certified."""

    category = "no-extractable-rounds"
    exit_code = 6


class UnsupportedDimensionError(SiqrngError):
    """Operation is only defined for a restricted detector dimension."""

    category = "unsupported-dimension"
    exit_code = 7


class SerializationError(SiqrngError):
    """Symbols cannot be serialized to bits (dimension not a power of two)."""

    category = "unsupported-serialization"
    exit_code = 8


class InconsistentAnalysisError(SiqrngError):
    """Analysis report disagrees with the data it is being applied to."""

    category = "inconsistent-analysis"
    exit_code = 9
