"""Behavioural single-output OTA.

Ideal port law ``I = ±G_m (V+ - V-)`` with the square-law transconductance
``G_m = (k/√2)(V_B - V_ss - 2V_th)``, a single-pole gain roll-off with optional
excess-phase delay, and terminal parasitics.
"""
from collections import deque
from dataclasses import dataclass, field, replace
import cmath
import math

import numpy as np

SQRT2 = math.sqrt(2.0)

# Not printed in the source material; see README "Defaults".
DEFAULT_K = 1.0e-3
DEFAULT_F_A = 100e6
TYPICAL_TAU = 1.25e-9


@dataclass(frozen=True)
class OtaParasitics:
    """Input/output terminal parasitics. ``inf`` resistances are open circuits."""

    r_i: float = math.inf
    c_i: float = 0.0
    r_o: float = math.inf
    c_o: float = 0.0

    def __post_init__(self):
        for name in ("r_i", "c_i", "r_o", "c_o"):
            v = getattr(self, name)
            if math.isnan(v) or v < 0:
                raise ValueError(f"parasitic {name} must be >= 0, got {v}")

    @classmethod
    def typical(cls):
        """Typical CMOS values: R_i = ∞, R_o = 1 MΩ, C_i = 50 fF, C_o = 100 fF."""
        return cls(r_i=math.inf, c_i=50e-15, r_o=1e6, c_o=100e-15)

    @property
    def is_ideal(self):
        return math.isinf(self.r_i) and math.isinf(self.r_o) and self.c_i == 0 and self.c_o == 0


@dataclass(frozen=True)
class OtaParams:
    k: float = DEFAULT_K
    v_ss: float = -1.2
    v_dd: float = 1.2
    v_th: float = 0.45
    v_bias: float = 0.6
    f_a: float = DEFAULT_F_A
    tau: float = 0.0
    parasitics: OtaParasitics = field(default_factory=OtaParasitics)

    def __post_init__(self):
        for name in ("k", "v_ss", "v_dd", "v_th", "v_bias", "f_a", "tau"):
            v = getattr(self, name)
            if math.isnan(v) or (math.isinf(v) and name != "f_a"):
                raise ValueError(f"OTA parameter {name} must be finite, got {v}")
        if not self.v_dd > self.v_ss:
            raise ValueError("V_dd must exceed V_ss")
        if not self.v_th > 0:
            raise ValueError("V_th must be positive")
        if not self.k > 0:
            raise ValueError("k must be positive")
        if not self.f_a > 0:
            raise ValueError("corner frequency must be positive")
        if self.tau < 0:
            raise ValueError("excess-phase delay must be non-negative")

    @property
    def omega_a(self):
        return 2.0 * math.pi * self.f_a

    @property
    def gm0(self):
        return transconductance(self, self.v_bias)

    def with_bias(self, v_bias):
        return replace(self, v_bias=v_bias)


def transconductance(p, v_bias):
    """``(k/√2)(v_bias - V_ss - 2V_th)`` in siemens. May be negative."""
    if not np.all(np.isfinite(v_bias)):
        raise ValueError("bias voltage must be finite")
    return p.k / SQRT2 * (v_bias - p.v_ss - 2.0 * p.v_th)


def output_current(gm, v_plus, v_minus, polarity=1):
    if polarity not in (1, -1):
        raise ValueError("polarity must be +1 or -1")
    return polarity * gm * (v_plus - v_minus)


def gain_coefficient(p, omega, regime="low-mid"):
    """Complex transconductance ratio γ(jω) = G_m(jω)/G_m0.

    ``regime="high"`` multiplies the single pole by the excess-phase term
    ``exp(-jωτ)``.
    """
    if omega < 0:
        raise ValueError("omega must be non-negative")
    if math.isinf(p.omega_a):
        g = 1.0 + 0.0j
    else:
        g = p.omega_a / (1j * omega + p.omega_a)
    if regime == "high":
        g *= cmath.exp(-1j * omega * p.tau)
    elif regime != "low-mid":
        raise ValueError(f"unknown regime {regime!r}")
    return complex(g)


class GmFilterState:
    """Single-owner state of a time-domain transconductor with roll-off.

    Holds the first-order low-pass output and a delay line of
    ``round(tau/dt)`` samples.
    """

    def __init__(self, dt, omega_a, tau=0.0, y0=0.0):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.dt = dt
        self.omega_a = omega_a
        self.tau = tau
        self.y = y0
        n = int(round(tau / dt))
        self.delay = deque([y0] * n, maxlen=n) if n > 0 else None
        self.decay = 0.0 if math.isinf(omega_a) else math.exp(-omega_a * dt)

    @property
    def delay_samples(self):
        return 0 if self.delay is None else self.delay.maxlen


def filtered_output_current(state, gm0, omega_a, tau, v_diff, dt):
    """Advance the roll-off model by one step; returns ``(current, state)``.

    The pole update is exact for an input held over the step. ``omega_a=inf``
    bypasses the pole and reproduces the ideal port law at every step.
    """
    if dt != state.dt or omega_a != state.omega_a or tau != state.tau:
        raise ValueError("filter state was built for a different dt/omega_a/tau")
    target = gm0 * v_diff
    if state.decay == 0.0:
        state.y = target
    else:
        state.y = state.decay * state.y + (1.0 - state.decay) * target
    out = state.y
    if state.delay is not None:
        delayed = state.delay[0]
        state.delay.append(out)
        out = delayed
    return out, state


def simulate_filtered(gm0, omega_a, tau, v_diff, dt, y0=0.0):
    """Run :func:`filtered_output_current` over a sampled input array."""
    st = GmFilterState(dt, omega_a, tau, y0)
    out = np.empty(len(v_diff))
    for i, v in enumerate(v_diff):
        out[i], st = filtered_output_current(st, gm0, omega_a, tau, float(v), dt)
    return out
