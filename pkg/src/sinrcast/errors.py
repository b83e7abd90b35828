"""Exception types raised across the simulator."""

from __future__ import annotations


class SinrCastError(Exception):
    """Base class for all simulator errors."""


class InvalidInputError(SinrCastError, ValueError):
    pass


class TopologyDisconnectedError(SinrCastError):
    def __init__(self, components: int, message: str | None = None):
        self.components = components
        super().__init__(message or f"communication graph is disconnected ({components} components)")


class TopologyParseError(InvalidInputError):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class DegenerateGeometryError(SinrCastError):
    """Two stations share a position, so the received power is unbounded."""


class DivergentSeriesError(SinrCastError, ValueError):
    """Path loss does not exceed the growth dimension."""


class ProtocolOrderError(SinrCastError):
    pass


class PreconditionError(SinrCastError, ValueError):
    pass


class InvariantViolation(SinrCastError, AssertionError):
    def __init__(self, invariant: str, round_index: int | None, detail: str = ""):
        self.invariant = invariant
        self.round_index = round_index
        where = f" at round {round_index}" if round_index is not None else ""
        super().__init__(f"invariant '{invariant}' violated{where}" + (f": {detail}" if detail else ""))


class CalibrationFailed(SinrCastError):
    def __init__(self, best, log):
        self.best = best
        self.log = log
        super().__init__("no grid point met the pass-rate targets")
