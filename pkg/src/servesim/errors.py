"""Exception types shared across the package."""

from __future__ import annotations


class ServesimError(Exception):
    """Base class for all package errors."""


class ConfigError(ServesimError):
    """A single invalid configuration value."""


class ValidationError(ServesimError):
    """Scenario/file validation failure; collects every offending item."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class CatalogMissError(ServesimError):
    """Unknown model name."""


class IncompleteTraceError(ServesimError):
    """Metric requested from a request that never completed."""


class EmptySampleError(ServesimError):
    """Aggregate over an empty sample set."""


class DegenerateDesignError(ServesimError):
    """Least-squares fit with no spread in the regressor."""


class DegenerateScenarioError(ServesimError):
    """Report requested for a scenario with zero mean total."""
