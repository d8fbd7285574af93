"""Series resistor into a grounded memcapacitor, output across the device."""
from dataclasses import dataclass
import math

import numpy as np

from ..analysis import frequency_response
from ..errors import Gm2Collapse
from ..memcap import MemcapParams
from ..solver import SolveConfig, StateSystem, integrate
from . import ScenarioParams, ScenarioResult, register

# measured breadboard gains: frequency (Hz), gain (dB)
REFERENCE_TABLE = (
    (0.5e3, 1.649), (200e3, 1.649), (320e3, 1.938), (410e3, 2.498),
    (500e3, 2.974), (600e3, 3.741), (700e3, 4.152), (800e3, 4.882),
    (900e3, 5.679), (1000e3, 6.375), (1500e3, 8.635),
)


@dataclass(frozen=True)
class RcParams(ScenarioParams):
    r: float = 1e3
    vb: float = 0.6
    vb2: float = 0.64
    c_int: float = 240e-9
    c_out: float = 47e-9
    topology: str = "incremental"
    amplitude: float = 0.35
    linear: bool = False  # replace the device by a fixed C = C_m(φ=0)
    settle_periods: int = 5
    measure_periods: int = 5


def rc_system(p, mp, source):
    o2 = mp.ota2
    a2 = o2.k / math.sqrt(2.0)
    off2 = o2.v_ss + 2.0 * o2.v_th
    g = -mp.topology.sign * mp.gm1 / mp.c_int
    gm3, c_out, eps, r = mp.gm3, mp.c_out, mp.eps_gm, p.r
    c_fixed = mp.capacitance_at(mp.vb2_init)

    if p.linear:
        def derivative(t, y):
            return np.array([(source(t) - y[0]) / (r * c_fixed), 0.0])
    else:
        def derivative(t, y):
            v, x = y
            gm2 = a2 * (x - off2)
            if gm2 < eps:
                raise Gm2Collapse(gm2, eps, t)
            rate = -g * gm3 / gm2 * v
            cm = c_out * (1.0 - gm3 / gm2)
            dcm = c_out * gm3 * a2 / gm2 ** 2 * rate
            return np.array([((source(t) - v) / r - dcm * v) / cm, rate])

    taps = {"v_in": lambda t, Y: source(t), "v_out": lambda t, Y: Y[:, 0]}
    return StateSystem(derivative, ("v_c", "v_b2"), taps)


def _params(p):
    return MemcapParams.from_biases(p.vb, p.vb2, p.vb, c_int=p.c_int, c_out=p.c_out,
                                    topology=p.topology).check_operating_point()


def pole_frequency(p):
    return 1.0 / (2.0 * math.pi * p.r * _params(p).capacitance_at(p.vb2))


def gains(p, freqs):
    mp = _params(p)
    tau = p.r * mp.capacitance_at(mp.vb2_init)

    def runner(source, duration):
        period = source.period
        dt = period / math.ceil(period / min(period / 400, tau / 4))
        sys = rc_system(p, mp, source)
        return integrate(sys, [0.0, mp.vb2_init], SolveConfig(0.0, duration, dt))

    return frequency_response(runner, freqs, settle_periods=p.settle_periods,
                              measure_periods=p.measure_periods,
                              amplitude=p.amplitude, settle_time=5 * tau)


@register("rc_lpf", RcParams, "R in series with the memcapacitor; gain on the reference grid")
def rc_lpf(p):
    freqs = [f for f, _ in REFERENCE_TABLE]
    ref = [g for _, g in REFERENCE_TABLE]
    sim = gains(p, freqs)
    rows = [{"freq": f, "gain_db": float(g), "reference_gain_db": r}
            for f, g, r in zip(freqs, sim, ref)]
    d_sim = np.sign(np.diff(sim))
    d_ref = np.sign(np.diff(ref))
    metrics = {
        "pole_hz": pole_frequency(p),
        "gain_low_db": float(sim[0]),
        "gain_high_db": float(sim[-1]),
        "simulated_trend": "falling" if sim[-1] < sim[0] else "rising",
        "reference_trend": "falling" if ref[-1] < ref[0] else "rising",
        "trend_step_agreement": float(np.mean(d_sim == d_ref)),
        "slope_db_per_decade_high": float((sim[-1] - sim[-2]) / math.log10(freqs[-1] / freqs[-2])),
        "linear": p.linear,
    }
    return ScenarioResult("rc_lpf", p, None, metrics, sweep=rows)
