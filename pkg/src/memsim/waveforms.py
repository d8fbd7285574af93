"""Independent voltage sources.

Every source is a frozen dataclass with ``__call__(t)`` and ``derivative(t)``,
both vectorised over numpy arrays. :func:`eval_waveform` is the functional
spelling used by the netlist layer.
"""
from dataclasses import dataclass, field
import math

import numpy as np

DEFAULT_EDGE = 15e-9


@dataclass(frozen=True)
class Sine:
    """``offset + amplitude * sin(2*pi*freq*t + phase)``."""

    amplitude: float
    freq: float
    phase: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if not self.freq > 0:
            raise ValueError(f"sine frequency must be positive, got {self.freq}")

    @property
    def omega(self):
        return 2.0 * math.pi * self.freq

    @property
    def period(self):
        return 1.0 / self.freq

    def __call__(self, t):
        return self.offset + self.amplitude * np.sin(self.omega * t + self.phase)

    def derivative(self, t):
        return self.amplitude * self.omega * np.cos(self.omega * t + self.phase)


def cosine(amplitude, freq, offset=0.0):
    """A cosine is a sine with a quarter-turn phase lead."""
    return Sine(amplitude, freq, phase=math.pi / 2, offset=offset)


@dataclass(frozen=True)
class SumOfSines:
    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ValueError("sum-of-sines needs at least one component")

    @property
    def period(self):
        # fastest component sets the step size
        return min(c.period for c in self.components)

    def __call__(self, t):
        return sum(c(t) for c in self.components)

    def derivative(self, t):
        return sum(c.derivative(t) for c in self.components)


@dataclass(frozen=True)
class Pulse:
    """Trapezoidal pulse train.

    ``width`` is measured from the start of the rising edge to the end of the
    falling edge, so ``rise + fall <= width <= period``.
    """

    high: float
    period: float
    width: float
    rise: float = DEFAULT_EDGE
    fall: float = DEFAULT_EDGE
    delay: float = 0.0
    low: float = 0.0

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("pulse period must be positive")
        if self.rise < 0 or self.fall < 0:
            raise ValueError("pulse edges must be non-negative")
        if self.rise + self.fall > self.width:
            raise ValueError("rise + fall exceeds the pulse width")
        if self.width > self.period:
            raise ValueError("pulse width exceeds the period")
        if self.delay < 0:
            raise ValueError("pulse delay must be non-negative")

    def _phase(self, t):
        t = np.asarray(t, dtype=float)
        return t - self.delay, np.mod(t - self.delay, self.period)

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        shifted, tau = self._phase(t)
        span = self.high - self.low
        top = self.width - self.fall
        out = np.full(tau.shape, self.low, dtype=float)
        if self.rise > 0:
            up = tau < self.rise
            out = np.where(up, self.low + span * tau / self.rise, out)
        flat = (tau >= self.rise) & (tau < top)
        out = np.where(flat, self.high, out)
        if self.fall > 0:
            down = (tau >= top) & (tau < self.width)
            out = np.where(down, self.high - span * (tau - top) / self.fall, out)
        out = np.where(shifted < 0, self.low, out)
        return float(out) if scalar else out

    def derivative(self, t):
        scalar = np.ndim(t) == 0
        shifted, tau = self._phase(t)
        span = self.high - self.low
        out = np.zeros(tau.shape)
        if self.rise > 0:
            out = np.where(tau < self.rise, span / self.rise, out)
        if self.fall > 0:
            top = self.width - self.fall
            out = np.where((tau >= top) & (tau < self.width), -span / self.fall, out)
        out = np.where(shifted < 0, 0.0, out)
        return float(out) if scalar else out

    def on_mask(self, t, fraction=1.0):
        """True where the pulse sits at (or within ``fraction`` of) its high level."""
        v = self(t)
        span = self.high - self.low
        if span == 0:
            return np.zeros(np.shape(t), dtype=bool)
        return (np.asarray(v) - self.low) / span >= fraction - 1e-12


@dataclass(frozen=True)
class Constant:
    value: float = 0.0

    def __call__(self, t):
        if np.ndim(t) == 0:
            return float(self.value)
        return np.full(np.shape(t), float(self.value))

    def derivative(self, t):
        if np.ndim(t) == 0:
            return 0.0
        return np.zeros(np.shape(t))


WaveformSource = Sine | SumOfSines | Pulse | Constant


def eval_waveform(src, t):
    """Instantaneous source voltage at ``t`` (seconds)."""
    return src(t)


def fastest_period(src):
    """Shortest time scale a fixed-step integrator has to resolve, or None for DC."""
    if isinstance(src, Constant):
        return None
    if isinstance(src, Pulse):
        edges = [e for e in (src.rise, src.fall) if e > 0]
        return min(edges) if edges else src.period
    return src.period
