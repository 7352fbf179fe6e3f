"""
Exception hierarchy for the packing toolkit.

Library code raises these; only the CLI turns them into process exit codes
through the `exit_code` class attribute.
"""


class PackingError(Exception):
    """Base class for every error raised by the toolkit."""

    exit_code = 1


class InstanceError(PackingError, ValueError):
    """Malformed instance or oracle data, or mismatched dimensions."""

    exit_code = 2


class SolverError(PackingError):
    """An LP or exact solve could not produce an optimal answer."""

    exit_code = 3


class LpInfeasibleError(SolverError):
    "Raised when the bounded model has no feasible point."


class LpUnboundedError(SolverError):
    "Raised when the objective grows without limit along a ray."


class IterationLimitError(SolverError):
    "Raised when the simplex exceeds its pivot budget."


class PreconditionError(PackingError):
    """An algorithm was called outside the conditions its guarantee needs."""

    exit_code = 4
