"""Domain exceptions. Bad arguments still raise ValueError."""

from __future__ import annotations


class EdgePushError(Exception):
    pass


class CalibrationError(EdgePushError):
    """Channel parameters do not satisfy the edge-rate calibration."""


class InfeasibleActionError(EdgePushError):
    def __init__(self, message: str, state=None, action=None) -> None:
        super().__init__(message)
        self.state = state
        self.action = action


class ReducibleChainError(EdgePushError):
    """The policy-induced chain has more than one closed class."""

    def __init__(self, message: str, states: tuple = ()) -> None:
        super().__init__(message)
        self.states = states


class MultipleRecurrentClassesError(ReducibleChainError):
    pass


class ConvergenceError(EdgePushError):
    pass


class PreconditionError(EdgePushError):
    pass
