"""Exception hierarchy shared across the simulator."""

from __future__ import annotations


class QVoteError(Exception):
    """Base class for all simulator errors."""


class ContractViolation(QVoteError, ValueError):
    """A caller broke an operation's precondition."""


class ResourceLimitError(QVoteError):
    """A request would exceed the desk-scale statevector bound."""


class AvailabilityError(QVoteError, RuntimeError):
    """A retry budget ran out (persistent testing, tampering or loss)."""

    def __init__(self, message: str, round_index: int | None = None):
        if round_index is not None:
            message = f"round {round_index}: {message}"
        super().__init__(message)
        self.round_index = round_index


class TamperingAlarm(QVoteError, RuntimeError):
    """A verification test on a shared resource failed."""


class PlanningError(QVoteError, ValueError):
    """A purification target cannot be reached within the round cap."""


class LeakError(ContractViolation):
    """A distinguisher tried to read private voter state."""
