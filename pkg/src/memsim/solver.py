"""Fixed-step classic RK4 over user-assembled state systems."""
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .errors import Diverged
from .trace import Trace

DEFAULT_GUARD = 1e6
REFERENCE_REFINEMENT = 32


@dataclass(frozen=True)
class StateSystem:
    """A first-order ODE ``y' = derivative(t, y)`` with named states.

    ``taps`` map channel names to vectorised functions ``tap(t, Y)`` where
    ``t`` has shape ``(n,)`` and ``Y`` has shape ``(n, dimension)``; they are
    evaluated once on the recorded samples, never inside the stepping loop.
    """

    derivative: Callable
    state_names: tuple
    taps: Mapping[str, Callable] = field(default_factory=dict)
    record_states: bool = True

    @property
    def dimension(self):
        return len(self.state_names)


@dataclass(frozen=True)
class SolveConfig:
    t0: float
    t1: float
    dt: float
    stride: int = 1
    guard: float = DEFAULT_GUARD

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError("t1 must exceed t0")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.stride < 1 or int(self.stride) != self.stride:
            raise ValueError("stride must be a positive integer")

    @property
    def steps(self):
        return int(round((self.t1 - self.t0) / self.dt))


def integrate(sys, init, cfg):
    """Classic RK4 from ``cfg.t0`` to ``cfg.t1``; records every ``stride`` steps.

    The initial state is always recorded. Raises :class:`Diverged` as soon as
    a state component is non-finite or exceeds ``cfg.guard`` in magnitude, so
    no recorded sample is ever NaN.
    """
    y = np.array(init, dtype=float)
    if y.shape != (sys.dimension,):
        raise ValueError(f"initial state has shape {y.shape}, system expects ({sys.dimension},)")
    _check(y, cfg.t0, cfg.guard)
    f = sys.derivative
    h = cfg.dt
    n = cfg.steps
    n_rec = n // cfg.stride + 1
    ts = np.empty(n_rec)
    ys = np.empty((n_rec, sys.dimension))
    ts[0] = cfg.t0
    ys[0] = y
    half = 0.5 * h
    sixth = h / 6.0
    rec = 1
    t = cfg.t0
    guard = cfg.guard
    for i in range(1, n + 1):
        k1 = f(t, y)
        k2 = f(t + half, y + half * k1)
        k3 = f(t + half, y + half * k2)
        k4 = f(t + h, y + h * k3)
        y = y + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = cfg.t0 + i * h
        if not np.all(np.abs(y) <= guard):
            _check(y, t, guard)
        if i % cfg.stride == 0:
            ts[rec] = t
            ys[rec] = y
            rec += 1
    return _to_trace(sys, ts[:rec], ys[:rec])


def reference_integrate(sys, init, cfg, refinement=REFERENCE_REFINEMENT):
    """Same method at ``dt / refinement``, recorded on the caller's grid.

    Used as a self-convergence oracle in tests only.
    """
    fine = replace(cfg, dt=cfg.dt / refinement, stride=cfg.stride * refinement)
    return integrate(sys, init, fine)


def _check(y, t, guard):
    bad = ~(np.abs(y) <= guard)
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise Diverged(t, idx, float(y[idx]), guard)


def _to_trace(sys, ts, ys):
    channels = {}
    if sys.record_states:
        for j, name in enumerate(sys.state_names):
            channels[name] = ys[:, j]
    for name, tap in sys.taps.items():
        channels[name] = np.broadcast_to(np.asarray(tap(ts, ys), dtype=float), ts.shape)
    return Trace(ts, channels)
