"""Exception types shared across the package."""


class ARRLError(Exception):
    """Base class for all errors raised by :mod:`arrl`."""


class Unreachable(ARRLError, ValueError):
    """Foot target lies outside the two-link workspace annulus."""


class DegenerateTarget(ARRLError, ValueError):
    """Foot target coincides with the hip joint."""


class OutOfDomain(ARRLError, ValueError):
    """Standing-hip equation has no real solution for this knee angle."""


class Infeasible(ARRLError, ValueError):
    """No statically stable transition exists for the given geometry."""


class SteppedAfterDone(ARRLError, RuntimeError):
    pass


class NonFiniteAction(ARRLError, ValueError):
    pass


class TellBeforeAsk(ARRLError, RuntimeError):
    pass


class FitnessCountMismatch(ARRLError, ValueError):
    pass


class IllConditionedKernel(ARRLError, RuntimeError):
    pass


class BadConfig(ARRLError, ValueError):
    """Configuration failed validation; ``field`` names the offending path."""

    def __init__(self, message: str, field: str = ""):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class MissingRuns(ARRLError, FileNotFoundError):
    pass


class MissingCheckpoint(ARRLError, FileNotFoundError):
    pass


class AskPending(ARRLError, RuntimeError):
    """``ask`` called while a previous population still awaits its fitness."""
