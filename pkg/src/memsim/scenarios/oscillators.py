"""Memcapacitor-inductor oscillator and the damped two-inductor circuit."""
from dataclasses import dataclass
import math

import numpy as np

from ..analysis import (attractor_summary, estimate_frequency, harmonic_content,
                        linearity_residual)
from ..errors import Gm2Collapse
from ..memcap import MemcapParams
from ..solver import SolveConfig, StateSystem, integrate
from . import ScenarioParams, ScenarioResult, register


# --------------------------------------------------------------------------
# LC with C(φ) = C0 + Kφ
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class OscillatorParams(ScenarioParams):
    c0: float = 200e-12
    k: float = 0.05  # F/Wb
    l: float = 1e-9
    v0: float = 1.0
    i0: float = 0.0
    periods: int = 3
    points_per_period: int = 2000

    def __post_init__(self):
        if not (self.c0 > 0 and self.l > 0):
            raise ValueError("C0 and L must be positive")
        if self.v0 == 0 and self.i0 == 0:
            raise ValueError("the oscillator needs nonzero initial energy")

    @property
    def omega0(self):
        return 1.0 / math.sqrt(self.l * self.c0)

    @property
    def epsilon(self):
        """Relative capacitance swing ``K·A/C0`` for flux amplitude ``A = V0/ω0``."""
        return self.k * self.v0 / (self.omega0 * self.c0)


def lc_system(p):
    """States ``(φ, q, i_L)``: ``φ' = q/C(φ)``, ``q' = -i_L``, ``i_L' = v/L``."""
    c0, k, l = p.c0, p.k, p.l

    def derivative(t, y):
        v = y[1] / (c0 + k * y[0])
        return np.array([v, -y[2], v / l])

    taps = {"v_c": lambda t, Y: Y[:, 1] / (c0 + k * Y[:, 0]),
            "c": lambda t, Y: c0 + k * Y[:, 0]}
    return StateSystem(derivative, ("phi", "q", "i_l"), taps)


def lc_initial(p):
    return [0.0, p.c0 * p.v0, p.i0]


def perturbation_current(p, t):
    """First-order small-K inductor current for a start at ``V_C = V0, i_L = 0``."""
    w = p.omega0
    a = p.v0 / w
    b = p.k * a * a / (3.0 * p.c0)
    phi = a * np.sin(w * t) + b * (np.cos(2 * w * t) - np.cos(w * t))
    return phi / p.l + p.i0


def simulate_lc(p, dt=None):
    period = 2.0 * math.pi / p.omega0
    dt = period / p.points_per_period if dt is None else dt
    return integrate(lc_system(p), lc_initial(p), SolveConfig(0.0, p.periods * period, dt))


def quadrature_residual(tr, period):
    """Linearity of ``i_L(t)`` against ``V_C(t - T/4)``; zero for an ellipse."""
    n4 = int(round(period / 4 / tr.dt))
    return linearity_residual(np.asarray(tr["v_c"])[:-n4], np.asarray(tr["i_l"])[n4:])


@register("lc_oscillator", OscillatorParams,
          "inductor across a linear-in-flux memcapacitor, with perturbation oracle")
def lc_oscillator(p):
    tr = simulate_lc(p)
    period = 2.0 * math.pi / p.omega0
    i_l = np.asarray(tr["i_l"])
    oracle = perturbation_current(p, tr.t)
    f_est = estimate_frequency(tr.t, i_l)
    h = harmonic_content(tr.t, i_l, f_est, 3)
    metrics = {
        "omega0": p.omega0,
        "epsilon": p.epsilon,
        "f_estimated": f_est,
        "harmonics": list(h),
        "second_harmonic_ratio": float(h[1] / h[0]),
        "quadrature_residual": quadrature_residual(tr, period),
        "oracle_rms_rel": float(np.sqrt(np.mean((i_l - oracle) ** 2)) / np.max(np.abs(i_l))),
    }
    return ScenarioResult("lc_oscillator", p, tr.with_channels(i_l_oracle=oracle), metrics)


# --------------------------------------------------------------------------
# damped circuit: memcapacitor ∥ (L3 + G) ∥ (L4 + R)
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class ChaoticParams(ScenarioParams):
    l3: float = 465e-3
    l4: float = 530e-3
    g: float = 600.0  # labelled a conductance, used as a resistance in ohms
    r: float = 1.8e3
    vb: float = 0.5
    vb2: float = 0.64
    c_int: float = 240e-9
    c_out: float = 10e-9
    topology: str = "decremental"
    v0: float = 0.35
    duration: float = 20e-3
    points_per_period: int = 200
    dissipation: float = 1.0  # multiplies both G and R

    def __post_init__(self):
        if not (self.l3 > 0 and self.l4 > 0 and self.g > 0 and self.r > 0):
            raise ValueError("inductances and resistances must be positive")

    def memcap(self):
        return MemcapParams.from_biases(self.vb, self.vb2, self.vb, c_int=self.c_int,
                                        c_out=self.c_out, topology=self.topology)


def chaotic_system(p, mp):
    """States ``(v_b2, q, i_L3, i_L4, σ)`` with ``v = q / C_m(v_b2)``."""
    o2 = mp.ota2
    a2 = o2.k / math.sqrt(2.0)
    off2 = o2.v_ss + 2.0 * o2.v_th
    gc = -mp.topology.sign * mp.gm1 / mp.c_int
    gm3, c_out, eps = mp.gm3, mp.c_out, mp.eps_gm
    g, r = p.g * p.dissipation, p.r * p.dissipation
    l3, l4 = p.l3, p.l4

    def derivative(t, y):
        gm2 = a2 * (y[0] - off2)
        if gm2 < eps:
            raise Gm2Collapse(gm2, eps, t)
        v = y[1] / (c_out * (1.0 - gm3 / gm2))
        return np.array([-gc * gm3 / gm2 * v, -(y[2] + y[3]),
                         (v - g * y[2]) / l3, (v - r * y[3]) / l4, y[1]])

    def volts(t, Y):
        return Y[:, 1] / (c_out * (1.0 - gm3 / (a2 * (Y[:, 0] - off2))))

    return StateSystem(derivative, ("v_b2", "q", "i_l3", "i_l4", "sigma"), {"v": volts})


def natural_period(p, mp=None):
    mp = mp or p.memcap()
    lp = p.l3 * p.l4 / (p.l3 + p.l4)
    return 2.0 * math.pi * math.sqrt(lp * mp.capacitance_at(mp.vb2_init))


def simulate_chaotic(p):
    mp = p.memcap().check_operating_point()
    dt = natural_period(p, mp) / p.points_per_period
    init = [mp.vb2_init, mp.capacitance_at(mp.vb2_init) * p.v0, 0.0, 0.0, 0.0]
    return integrate(chaotic_system(p, mp), init, SolveConfig(0.0, p.duration, dt))


@register("chaotic", ChaoticParams,
          "memcapacitor with two lossy inductor branches; point attractors")
def chaotic(p):
    tr = simulate_chaotic(p)
    s3 = attractor_summary(tr, ("sigma", "i_l3"))
    s4 = attractor_summary(tr, ("sigma", "i_l4"))
    s34 = attractor_summary(tr, ("i_l3", "i_l4"))
    periods = s34.dominant_periods
    ratio = periods[-1] / periods[0] if len(periods) >= 2 else None
    metrics = {
        "sigma_il3": s3.to_dict(),
        "sigma_il4": s4.to_dict(),
        "il3_il4": s34.to_dict(),
        "natural_period": natural_period(p),
        "period_ratio": ratio,
        "period_doubling_seen": ratio is not None and abs(ratio - 2.0) < 0.2,
    }
    return ScenarioResult("chaotic", p, tr, metrics)
