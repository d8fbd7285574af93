"""Single-device experiments: pulses, q-v sweeps, parallel pairs, MC case."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import math
from typing import Optional

import numpy as np

from ..analysis import loop_metrics, sigma_phi_locus
from ..circuit import Circuit
from ..memcap import (MemcapParams, extract_memcapacitance_from_pulse, on_intervals,
                      parallel_compose, simulate)
from ..montecarlo import worker_count
from ..netlist import format_spec, parse, validate
from ..trace import Trace
from ..units import format_quantity
from ..waveforms import Pulse, Sine
from . import ScenarioParams, ScenarioResult, UnknownScenario, register


# --------------------------------------------------------------------------
# pulse non-volatility
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class PulseParams(ScenarioParams):
    topology: str = "decremental"
    amplitude: float = 0.35
    period: float = 1e-6
    width: float = 500e-9
    edge: float = 15e-9
    n_pulses: int = 6
    vb: float = 0.5  # OTA1 and OTA3
    vb2: float = 0.8  # keeps C_m positive over six decremental pulses
    c_int: float = 2e-9
    c_out: float = 500e-12


@register("pulse_nonvolatility", PulseParams,
          "memcapacitance under a unipolar pulse train; OFF-interval retention")
def pulse_nonvolatility(p):
    mp = MemcapParams.from_biases(p.vb, p.vb2, p.vb, c_int=p.c_int, c_out=p.c_out,
                                  topology=p.topology)
    src = Pulse(high=p.amplitude, period=p.period, width=p.width, rise=p.edge, fall=p.edge)
    tr = simulate(mp, src, p.n_pulses * p.period)
    if p.amplitude == 0:
        extracted = np.asarray(tr["c_m"])
    else:
        extracted = extract_memcapacitance_from_pulse(tr, p.amplitude)
    tr = tr.with_channels(c_m_ext=extracted)

    v = np.asarray(tr["v_in"])
    cm = np.asarray(tr["c_m"])
    off = on_intervals(v == 0.0)
    drift_state = max((np.ptp(cm[a:b]) for a, b in off if b - a > 0), default=0.0)
    drift_ext = max((np.ptp(extracted[a:b]) for a, b in off if b - a > 0), default=0.0)
    on = on_intervals(v != 0.0)
    levels = [float(cm[b - 1]) for a, b in on]
    steps = np.diff(cm)
    direction = mp.topology.sign * (1 if p.amplitude >= 0 else -1)
    monotone = bool(np.all(direction * steps >= 0))
    strict = bool(np.all(direction * np.diff(levels) > 0)) if len(levels) > 1 else False
    metrics = {
        "topology": mp.topology.value,
        "off_drift": float(max(drift_state, drift_ext)),
        "off_drift_state": float(drift_state),
        "off_drift_extracted": float(drift_ext),
        "on_monotone": monotone,
        "pulse_levels": levels,
        "levels_strictly_monotone": strict,
        "pulses": len(on),
        "c_m_initial": float(cm[0]),
        "c_m_final": float(cm[-1]),
        "c_m_constant": bool(np.ptp(cm) == 0.0),
    }
    return ScenarioResult("pulse_nonvolatility", p, tr, metrics)


# --------------------------------------------------------------------------
# q-v sweeps
# --------------------------------------------------------------------------
_AXIS_DEFAULTS = {
    # constant C·f: C_int follows the frequency
    ("frequency", "cf"): dict(points=(500.0, 1e3, 500e3, 1e6, 4e6, 5e6, 8e6),
                              amplitude=0.45, vb=0.6, vb2=0.64, c_out=500e-12,
                              topology="incremental", freq=1e3, c_int=240e-9),
    ("frequency", "c"): dict(points=(1e3, 1.2e3, 1.5e3), amplitude=0.15, vb=0.62,
                             vb2=0.64, c_out=500e-9, topology="incremental",
                             freq=1e3, c_int=240e-9),
    ("bias", "c"): dict(points=(0.4, 0.6, 0.8), amplitude=0.35, vb=0.6, vb2=0.64,
                        c_out=500e-9, topology="incremental", freq=1e3, c_int=240e-9),
    ("capacitance", "c"): dict(points=(250e-12, 240e-9, 350e-9), amplitude=0.15,
                               vb=0.62, vb2=0.64, c_out=500e-9,
                               topology="incremental", freq=1e3, c_int=240e-9),
}


@dataclass(frozen=True)
class QvSweepParams(ScenarioParams):
    axis: str = "frequency"
    hold: Optional[str] = None  # "cf" or "c"; frequency axis defaults to "cf"
    points: Optional[tuple] = None
    amplitude: Optional[float] = None
    vb: Optional[float] = None  # V_B1 = V_B3
    vb2: Optional[float] = None
    c_int: Optional[float] = None
    c_out: Optional[float] = None
    freq: Optional[float] = None
    topology: Optional[str] = None
    cf: float = 2e-4
    periods: int = 2
    points_per_period: int = 2000

    def resolved(self):
        hold = self.hold or ("cf" if self.axis == "frequency" else "c")
        key = (self.axis, hold)
        if key not in _AXIS_DEFAULTS:
            raise ValueError(f"unsupported axis/hold combination {self.axis}/{hold}")
        base = dict(_AXIS_DEFAULTS[key])
        for k in base:
            if getattr(self, k) is not None:
                base[k] = getattr(self, k)
        base["hold"] = hold
        return base


def _qv_point(args):
    axis, r, cf, periods, ppp, x = args
    f, c_int, vb = r["freq"], r["c_int"], r["vb"]
    if axis == "frequency":
        f = x
        if r["hold"] == "cf":
            c_int = cf / f
    elif axis == "bias":
        vb = x
    else:
        c_int = x
    mp = MemcapParams.from_biases(vb, r["vb2"], vb, c_int=c_int, c_out=r["c_out"],
                                  topology=r["topology"])
    period = 1.0 / f
    tr = simulate(mp, Sine(r["amplitude"], f), periods * period, dt=period / ppp)
    m = loop_metrics(tr, period)
    seg = tr.last(period)
    return m, c_int, f, vb, seg


@register("qv_sweep", QvSweepParams,
          "steady-state q-v loops across frequency, bias or integrator capacitance")
def qv_sweep(p):
    r = p.resolved()
    jobs = [(p.axis, r, p.cf, p.periods, p.points_per_period, float(x)) for x in r["points"]]
    workers = worker_count(len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_qv_point, jobs))
    else:
        results = [_qv_point(j) for j in jobs]
    rows, channels = [], {}
    for i, (m, c_int, f, vb, seg) in enumerate(results):
        rows.append({
            "point": r["points"][i], "freq": f, "c_int": c_int, "vb": vb,
            "pinch_metric": m.pinch_metric, "lobe_count": m.lobe_count,
            "total_area": m.total_area, "lobe_areas": list(m.lobe_areas),
            "linearity_residual": m.linearity_residual,
            "crossing_count": m.crossing_count,
        })
        channels[f"v_in_{i}"] = seg["v_in"]
        channels[f"q_{i}"] = seg["q"]
    # loops share a phase grid (fraction of a period) so they overlay directly
    n = len(results[0][4])
    trace = Trace(np.arange(n) / n, channels) if all(
        len(res[4]) == n for res in results) else None
    areas = [row["total_area"] for row in rows]
    lin = [row["linearity_residual"] for row in rows]
    metrics = {
        "axis": p.axis, "hold": r["hold"],
        "all_pinched": all(row["pinch_metric"] < 1e-2 for row in rows),
        "all_two_lobes": all(row["lobe_count"] == 2 for row in rows),
        "area_strictly_increasing": bool(np.all(np.diff(areas) > 0)),
        "area_strictly_decreasing": bool(np.all(np.diff(areas) < 0)),
        "linearity_strictly_decreasing": bool(np.all(np.diff(lin) < 0)),
        "points": rows,
    }
    return ScenarioResult("qv_sweep", p, trace, metrics, sweep=rows)


# --------------------------------------------------------------------------
# sigma-phi locus of one steady period
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class LocusParams(ScenarioParams):
    freq: float = 1e3
    amplitude: float = 0.35
    vb: float = 0.6
    vb2: float = 0.64
    c_int: float = 240e-9
    c_out: float = 500e-12
    topology: str = "decremental"


@register("sigma_phi_locus", LocusParams, "single-valued σ-Φ locus of a driven memcapacitor")
def sigma_phi(p):
    mp = MemcapParams.from_biases(p.vb, p.vb2, p.vb, c_int=p.c_int, c_out=p.c_out,
                                  topology=p.topology)
    period = 1.0 / p.freq
    tr = simulate(mp, Sine(p.amplitude, p.freq), period)
    check = sigma_phi_locus(tr)
    metrics = {"single_valued": check.single_valued, "max_fold_gap": check.max_fold_gap,
               "loop": loop_metrics(tr, period).to_dict()}
    return ScenarioResult("sigma_phi_locus", p, tr, metrics)


# --------------------------------------------------------------------------
# parallel pair
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class ParallelParams(ScenarioParams):
    freq: float = 1e6
    amplitude: float = 0.25
    vb: float = 0.4
    vb2: float = 0.64
    c_int: float = 120e-12
    c_out: float = 500e-12
    c_int2: Optional[float] = None  # second device; defaults to identical
    topology: str = "incremental"
    periods: int = 2


def _pair_netlist(p, c_int2):
    q = format_quantity
    common = (f"topology={p.topology} c_out={q(p.c_out)} vb1={q(p.vb)} "
              f"vb2={q(p.vb2)} vb3={q(p.vb)}")
    return (
        f"source vin sine amp={q(p.amplitude)} freq={q(p.freq)}\n"
        f"memcap M1 plus=vin minus=0 c_int={q(p.c_int)} {common}\n"
        f"memcap M2 plus=vin minus=0 c_int={q(c_int2)} {common}\n"
        "record q,i,v,i(vin)\n"
    )


@register("parallel", ParallelParams, "two memcapacitors sharing one drive")
def parallel(p):
    c_int2 = p.c_int if p.c_int2 is None else p.c_int2
    period = 1.0 / p.freq
    dt = period / 2000
    src = Sine(p.amplitude, p.freq)
    devs = [MemcapParams.from_biases(p.vb, p.vb2, p.vb, c_int=c, c_out=p.c_out,
                                     topology=p.topology) for c in (p.c_int, c_int2)]
    singles = [simulate(d, src, p.periods * period, dt=dt) for d in devs]
    summed = parallel_compose(singles)
    # the same pair solved as one circuit gives an independent Q_equ
    circ = Circuit(validate(parse(_pair_netlist(p, c_int2))))
    joint = circ.run(p.periods * period, dt=dt)
    q_equ = np.asarray(joint["q(M1)"]) + np.asarray(joint["q(M2)"])
    q_sum = np.asarray(summed["q"])
    rel = float(np.max(np.abs(q_equ - q_sum)) / np.max(np.abs(q_sum)))
    m1 = loop_metrics(singles[0], period)
    mp_ = loop_metrics(summed, period)
    tr = summed.with_channels(q_m1=singles[0]["q"], q_m2=singles[1]["q"], q_equ=q_equ,
                              i_src=joint["i(vin)"])
    metrics = {
        "q_equ_max_rel_error": rel,
        "area_single": m1.total_area,
        "area_parallel": mp_.total_area,
        "area_ratio": mp_.total_area / m1.total_area,
        "parallel_pinch": mp_.pinch_metric,
        "netlist": _pair_netlist(p, c_int2),
    }
    return ScenarioResult("parallel", p, tr, metrics, traces={"M1": singles[0], "M2": singles[1]})


# --------------------------------------------------------------------------
# Monte Carlo base case
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class PinchParams(ScenarioParams):
    freq: float = 1e3
    amplitude: float = 0.35
    vb: float = 0.6
    vb2: float = 0.64
    c_int: float = 240e-9
    c_out: float = 500e-12
    topology: str = "decremental"
    points_per_period: int = 2000

    def nominal(self):
        return MemcapParams.from_biases(self.vb, self.vb2, self.vb, c_int=self.c_int,
                                        c_out=self.c_out, topology=self.topology)


def _pinch_run(p, mp):
    period = 1.0 / p.freq
    # the state depends on flux alone, so the first period from rest is steady
    tr = simulate(mp, Sine(p.amplitude, p.freq), period, dt=period / p.points_per_period)
    return tr, loop_metrics(tr, period)


@register("pinch_1khz", PinchParams, "nominal 1 kHz decremental loop (Monte Carlo base case)")
def pinch_1khz(p):
    tr, m = _pinch_run(p, p.nominal())
    return ScenarioResult("pinch_1khz", p, tr, m.to_dict())


@dataclass(frozen=True)
class McCase:
    name: str
    params: PinchParams

    @property
    def nominal(self):
        return self.params.nominal()

    def run(self, mp):
        return _pinch_run(self.params, mp)[1]


MC_CASES = {"pinch_1khz": PinchParams}


def mc_case(name, overrides=None):
    if name not in MC_CASES:
        raise UnknownScenario(f"no Monte Carlo case {name!r}; known: {', '.join(MC_CASES)}")
    return McCase(name, MC_CASES[name]().with_overrides(overrides))
