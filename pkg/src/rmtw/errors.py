"""Shared exception hierarchy.

Contract errors (bad inputs, exhausted budgets, covers that fail their
advertised properties) map to CLI exit code 2.  Invariant-check failures
are reported, not raised, and map to exit code 1.
"""


class RmtwError(Exception):
    """Base class for all package errors."""


class ContractError(RmtwError):
    """An input or budget contract was violated; the pipeline cannot continue."""
