"""Exception types shared across the package.

The CLI maps these onto process exit codes: input/model problems exit 3,
solver breakdowns exit 4.
"""


class LfnashError(Exception):
    """Base class for package errors."""


class InvalidModelError(LfnashError):
    """A game, instance file, or configuration is malformed."""


class InfeasibleRegionError(LfnashError):
    """A feasibility system has no solution."""


class UnboundedObjectiveError(LfnashError):
    """An optimization problem is unbounded below."""


class EncodingError(LfnashError):
    """A single-level encoding cannot be built from the given data."""


class SolverError(LfnashError):
    """The mixed-integer solver failed for internal (numerical) reasons."""


class TrajectoryError(LfnashError):
    """A recorded trajectory violates one of its documented laws."""
