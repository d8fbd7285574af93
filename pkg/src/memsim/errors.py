"""Exception hierarchy shared across the engine."""


class MemsimError(Exception):
    """Base class for all engine errors."""


class SimulationError(MemsimError):
    """A transient run could not be completed."""


class Diverged(SimulationError):
    """A state component left the stiffness guard or became non-finite."""

    def __init__(self, t, index, value, guard):
        self.t = t
        self.index = index
        self.value = value
        self.guard = guard
        super().__init__(
            f"state[{index}] = {value!r} exceeded guard {guard:g} at t = {t:.6g} s"
        )


class Gm2Collapse(SimulationError):
    """The memory state drove OTA2's transconductance to (or through) zero."""

    def __init__(self, gm2, eps, t=None):
        self.gm2 = gm2
        self.eps = eps
        self.t = t
        where = "" if t is None else f" at t = {t:.6g} s"
        super().__init__(f"G_m2 = {gm2:.3e} S fell below {eps:g} S{where}")


class DenominatorNearZero(MemsimError, ArithmeticError):
    """The closed-form memcapacitance is evaluated at its singular flux."""


class TooFewSamples(MemsimError, ValueError):
    """An analysis kernel was handed too short a record."""
