"""Amplitude modulation with a memcapacitor, and coherent demodulation.

The drive is message plus carrier. The memcapacitance follows the message
flux, so the device current carries the message on the carrier. A second
order bandpass at the carrier isolates the modulated signal; multiplying by a
local carrier and a second order lowpass recover the message.

Filters are behavioural, parameterised by their centre or cut-off frequency
and Q. In state form, ``x1' = ω0 x2`` and ``x2' = ω0 (u - x1 - x2/Q)``; the
lowpass output is ``x1`` and the unity-peak bandpass output is ``x2/Q``.
"""
from dataclasses import dataclass
import math
from typing import Optional

import numpy as np

from ..analysis import spectrum
from ..errors import Gm2Collapse
from ..memcap import MemcapParams
from ..solver import SolveConfig, StateSystem, integrate
from ..waveforms import Sine, SumOfSines, cosine
from . import ScenarioParams, ScenarioResult, register


@dataclass(frozen=True)
class AmParams(ScenarioParams):
    f_message: float = 60e3
    f_carrier: float = 2e6
    a_message: float = 0.12
    a_carrier: float = 0.37
    lo_amplitude: float = 0.45
    lo_phase: Optional[float] = None  # default: locked to the received carrier
    vb: float = 0.6
    vb2: float = 0.64
    c_int: float = 500e-9
    c_out: float = 50e-12
    topology: str = "decremental"
    q_factor: float = 1.0 / math.sqrt(2.0)
    r_sense: float = 1e3  # transresistance turning device current into volts
    settle_periods: float = 5.0  # message periods before the analysis window
    window: float = 100e-6
    n_fft: int = 16384
    bypass_filters: bool = False
    control: bool = True  # also run with the message removed


def _chain(p, mp, source, lo):
    """State system: memory voltage, bandpass (2) and lowpass (2) states."""
    o2 = mp.ota2
    a2 = o2.k / math.sqrt(2.0)
    off2 = o2.v_ss + 2.0 * o2.v_th
    g = -mp.topology.sign * mp.gm1 / mp.c_int
    gm3, c_out, eps = mp.gm3, mp.c_out, mp.eps_gm
    wb = 2.0 * math.pi * p.f_carrier
    wl = 2.0 * math.pi * p.f_message
    Q = p.q_factor
    rs = p.r_sense
    bypass = p.bypass_filters

    def current(gm2, rate, v, vdot):
        cm = c_out * (1.0 - gm3 / gm2)
        dcm = c_out * gm3 * a2 / gm2 ** 2 * rate
        return dcm * v + cm * vdot

    def derivative(t, y):
        v = source(t)
        vdot = source.derivative(t)
        gm2 = a2 * (y[0] - off2)
        if gm2 < eps:
            raise Gm2Collapse(gm2, eps, t)
        rate = -g * gm3 / gm2 * v
        u = rs * current(gm2, rate, v, vdot)
        modulated = u if bypass else y[2] / Q
        prod = modulated * lo(t)
        return np.array([
            rate,
            wb * y[2], wb * (u - y[1] - y[2] / Q),
            wl * y[4], wl * (prod - y[3] - y[4] / Q),
        ])

    def taps_i(t, Y):
        gm2 = a2 * (Y[:, 0] - off2)
        v = source(t)
        return current(gm2, -g * gm3 / gm2 * v, v, source.derivative(t))

    def modulated(t, Y):
        return rs * taps_i(t, Y) if bypass else Y[:, 2] / Q

    taps = {
        "v_in": lambda t, Y: source(t),
        "i_in": taps_i,
        "c_m": lambda t, Y: c_out * (1.0 - gm3 / (a2 * (Y[:, 0] - off2))),
        "modulated": modulated,
        "lo": lambda t, Y: lo(t),
        "product": lambda t, Y: modulated(t, Y) * lo(t),
        "demodulated": lambda t, Y: modulated(t, Y) * lo(t) if bypass else Y[:, 3],
    }
    return StateSystem(derivative, ("v_b2", "bp1", "bp2", "lp1", "lp2"), taps)


def run_chain(p):
    mp = MemcapParams.from_biases(p.vb, p.vb2, p.vb, c_int=p.c_int, c_out=p.c_out,
                                  topology=p.topology).check_operating_point()
    parts = [cosine(p.a_carrier, p.f_carrier)]
    if p.a_message != 0:
        parts.insert(0, cosine(p.a_message, p.f_message))
    source = SumOfSines(tuple(parts))
    # the received carrier is C_m0·d/dt(cos) = -C_m0·sin: lead the LO by π/2
    c_m0 = mp.capacitance_at(mp.vb2_init)
    phase = p.lo_phase
    if phase is None:
        phase = math.pi / 2 if c_m0 > 0 else -math.pi / 2
    lo = Sine(p.lo_amplitude, p.f_carrier, phase=math.pi / 2 + phase)
    dt = p.window / p.n_fft
    t_stop = p.settle_periods / p.f_message + p.window
    tr = integrate(_chain(p, mp, source, lo), [mp.vb2_init, 0, 0, 0, 0],
                   SolveConfig(0.0, t_stop, dt))
    tr = tr.with_channels(message=p.a_message * np.cos(2 * math.pi * p.f_message * tr.t))
    return tr, mp


def _levels(spec, fc, fm):
    def db(f):
        return 20.0 * math.log10(max(spec.magnitude_at(f), 1e-300))
    return db(fc), db(fc - fm), db(fc + fm)


@register("am_chain", AmParams, "AM modulation by a memcapacitor and coherent demodulation")
def am_chain(p):
    tr, mp = run_chain(p)
    win = tr.last(p.window)
    spec = spectrum(win["modulated"], win.dt)
    fc, fm = p.f_carrier, p.f_message
    top3 = sorted(spec.largest_bins(3))
    carrier, lsb, usb = _levels(spec, fc, fm)
    other = [f for f in spec.largest_bins(10) if f not in top3]
    others_db = 20.0 * math.log10(spec.magnitude_at(other[0])) if other else -math.inf
    demod = np.asarray(win["demodulated"])
    msg = np.asarray(win["message"])
    corr = float(np.corrcoef(demod, msg)[0, 1]) if np.std(msg) > 0 else float("nan")
    metrics = {
        "top3_bins_hz": top3,
        "carrier_db": carrier,
        "lsb_db": lsb,
        "usb_db": usb,
        "sideband_rel_carrier_db": max(lsb, usb) - carrier,
        "next_bin_rel_sideband_db": others_db - min(lsb, usb),
        "correlation": corr,
        "c_m0": mp.capacitance_at(mp.vb2_init),
        "bin_hz": spec.resolution,
    }
    traces = {}
    if p.control and p.a_message != 0:
        ctrl = p.with_overrides({"a_message": 0.0, "control": False})
        ctr, _ = run_chain(ctrl)
        cwin = ctr.last(p.window)
        cspec = spectrum(cwin["modulated"], cwin.dt)
        c_car, c_lsb, c_usb = _levels(cspec, fc, fm)
        metrics["control"] = {
            "carrier_db": c_car,
            "sideband_rel_carrier_db": max(c_lsb, c_usb) - c_car,
            "suppression_db": min(lsb - c_lsb, usb - c_usb),
        }
        traces["control"] = cwin
    metrics["spectrum_peaks"] = spec.peaks(count=5)
    tables = {"spectrum": {"freq": spec.freqs, "magnitude": spec.magnitudes}}
    return ScenarioResult("am_chain", p, win, metrics, traces=traces, tables=tables)
