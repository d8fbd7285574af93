"""Three-OTA grounded memcapacitor emulator.

Three fidelities share one parameter set:

* closed form, ``C_m(φ)`` evaluated directly from the flux;
* structural, the node equations of the emulator integrated in time with the
  bias voltage on the integrator capacitor as the memory state;
* non-ideal, the small-signal admittance with OTA gain roll-off and terminal
  parasitics.

Structural model, with ``G_mi = (k/√2)(V_Bi - V_ss - 2V_th)``::

    V_a      = -(G_m3 / G_m2(v_b2)) * v_in          (KCL at the OTA2/OTA3 node)
    dv_b2/dt = -s * G_m1 * V_a / C_int              (OTA1 charging C_int)
    q        = C_out * (v_in + V_a)

``s`` is +1 for the incremental topology (capacitance grows with positive
flux) and -1 for the decremental one. Solving with ``G_m2`` frozen at its
initial value gives the closed form used by :func:`memcapacitance_ideal`.
"""
from dataclasses import dataclass, field, replace
from enum import Enum
import math

import numpy as np

from .errors import DenominatorNearZero, Gm2Collapse
from .ota import OtaParams, OtaParasitics, SQRT2, transconductance
from .solver import SolveConfig, StateSystem, integrate
from .trace import Trace
from .waveforms import Pulse, fastest_period

EPS_DEN = 1e-9
EPS_GM = 1e-9
DEFAULT_VB2 = 0.64
CONVENTIONS = ("rederived", "as-written")


class Topology(Enum):
    INCREMENTAL = "incremental"
    DECREMENTAL = "decremental"

    @property
    def sign(self):
        return 1 if self is Topology.INCREMENTAL else -1

    @property
    def wiring(self):
        """Switch connections among pins w, x, y, z."""
        return ("w-x", "y-z") if self is Topology.INCREMENTAL else ("w-z", "y-x")

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        for member in cls:
            if text in (member.value, member.value[:3]):
                return member
        raise ValueError(f"unknown topology {value!r}")


@dataclass(frozen=True)
class MemcapParams:
    ota1: OtaParams
    ota2: OtaParams
    ota3: OtaParams
    c_int: float
    c_out: float
    c_aux: float = 500e-12  # carried for completeness, enters no equation
    topology: Topology = Topology.INCREMENTAL
    sign_convention: str = "rederived"
    eps_den: float = EPS_DEN
    eps_gm: float = EPS_GM

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology.parse(self.topology))
        if not (self.c_int > 0 and math.isfinite(self.c_int)):
            raise ValueError(f"C_int must be positive, got {self.c_int}")
        if not (self.c_out > 0 and math.isfinite(self.c_out)):
            raise ValueError(f"C_out must be positive, got {self.c_out}")
        if self.sign_convention not in CONVENTIONS:
            raise ValueError(f"sign_convention must be one of {CONVENTIONS}")
        if abs(self.gm2_0) < self.eps_gm:
            raise ValueError(
                f"G_m2 at the initial bias is {self.gm2_0:.3e} S; it must be nonzero"
            )

    @classmethod
    def from_biases(
        cls,
        vb1=0.6,
        vb2=DEFAULT_VB2,
        vb3=0.6,
        c_int=240e-9,
        c_out=500e-12,
        topology="incremental",
        c_aux=500e-12,
        sign_convention="rederived",
        **ota_kw,
    ):
        """Three identical OTAs differing only in their bias voltages."""
        base = OtaParams(**ota_kw)
        return cls(
            ota1=base.with_bias(vb1),
            ota2=base.with_bias(vb2),
            ota3=base.with_bias(vb3),
            c_int=c_int,
            c_out=c_out,
            c_aux=c_aux,
            topology=topology,
            sign_convention=sign_convention,
        )

    def with_biases(self, vb1=None, vb2=None, vb3=None):
        return replace(
            self,
            ota1=self.ota1 if vb1 is None else self.ota1.with_bias(vb1),
            ota2=self.ota2 if vb2 is None else self.ota2.with_bias(vb2),
            ota3=self.ota3 if vb3 is None else self.ota3.with_bias(vb3),
        )

    @property
    def gm1(self):
        return transconductance(self.ota1, self.ota1.v_bias)

    @property
    def gm2_0(self):
        return transconductance(self.ota2, self.ota2.v_bias)

    @property
    def gm3(self):
        return transconductance(self.ota3, self.ota3.v_bias)

    @property
    def vb2_init(self):
        return self.ota2.v_bias

    @property
    def headroom(self):
        """Distance of the initial memory voltage from OTA2's cut-off."""
        return self.ota2.v_bias - self.ota2.v_ss - 2.0 * self.ota2.v_th

    def flux_coupling(self, c=None):
        """``G_m1 G_m3 / (G_m2 C)`` in V/Wb, with ``G_m2`` at its initial bias."""
        return self.gm1 * self.gm3 / (self.gm2_0 * (self.c_int if c is None else c))

    def gm2(self, v_b2):
        return self.ota2.k / SQRT2 * (v_b2 - self.ota2.v_ss - 2.0 * self.ota2.v_th)

    def capacitance_at(self, v_b2):
        """Instantaneous memcapacitance for a given memory voltage."""
        return self.c_out * (1.0 - self.gm3 / self.gm2(v_b2))

    def check_operating_point(self):
        """Reject negative transconductances before building a network."""
        for name, g in (("G_m1", self.gm1), ("G_m2", self.gm2_0), ("G_m3", self.gm3)):
            if not g > 0:
                raise ValueError(f"{name} = {g:.3e} S is not a valid operating point")
        return self


@dataclass(frozen=True)
class MemcapState:
    v_b2: float
    phi: float = 0.0
    q: float = 0.0


def initial_state(p, v_in=0.0):
    return MemcapState(v_b2=p.vb2_init, phi=0.0, q=p.capacitance_at(p.vb2_init) * v_in)


# --------------------------------------------------------------------------
# closed form
# --------------------------------------------------------------------------
def _offset_and_sign(p):
    o2 = p.ota2
    if p.sign_convention == "rederived":
        return o2.v_ss + 2.0 * o2.v_th - p.vb2_init, -p.topology.sign
    # literal closed form: "+" in the denominator for incremental
    return o2.v_ss + 2.0 * o2.v_th, p.topology.sign


def _bracket(p, flux_term):
    """``1 + G_m3 / ((k/√2)(offset + flux_term))``; shared by every fidelity."""
    offset, _ = _offset_and_sign(p)
    den = p.ota2.k / SQRT2 * (offset + flux_term)
    if np.any(np.abs(den) < p.eps_den):
        raise DenominatorNearZero(
            f"memcapacitance denominator within {p.eps_den:g} S of zero"
        )
    return 1.0 + p.gm3 / den


def memcapacitance_ideal(p, phi):
    """Closed-form memcapacitance (F) as a function of input flux (Wb).

    Vectorised over ``phi``. Raises :class:`DenominatorNearZero` at the
    singular flux.
    """
    _, sgn = _offset_and_sign(p)
    phi = np.asarray(phi, dtype=float)
    out = p.c_out * _bracket(p, sgn * p.flux_coupling() * phi)
    return float(out) if out.ndim == 0 else out


def sinusoid_flux(amplitude, omega, t):
    """Flux of ``A sin(ωt)`` applied from rest at t = 0: ``(A/ω)(1 - cos ωt)``.

    It never changes sign, so a sine drive from rest moves the memory state
    one way only.
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    return amplitude / omega * (1.0 - np.cos(omega * np.asarray(t)))


# --------------------------------------------------------------------------
# structural model
# --------------------------------------------------------------------------
def _rate_coefficients(p):
    o2 = p.ota2
    a2 = o2.k / SQRT2
    off2 = o2.v_ss + 2.0 * o2.v_th
    # dv_b2/dt = pol * gm1 * V_a / C_int with V_a = -(gm3/gm2) v
    pol = -p.topology.sign
    return a2, off2, pol * p.gm1 / p.c_int, p.gm3


def memory_rate(p, v_b2, v_in):
    """``dv_b2/dt`` for a scalar memory voltage and input voltage."""
    a2, off2, g, gm3 = _rate_coefficients(p)
    gm2 = a2 * (v_b2 - off2)
    if gm2 < p.eps_gm:
        raise Gm2Collapse(gm2, p.eps_gm)
    return -g * gm3 / gm2 * v_in


def step_structural(p, s, v_in, dt, v_next=None):
    """One RK4 step of the node equations.

    ``v_in`` is the input at the start of the step; the input is linearly
    interpolated to ``v_next`` (held constant when omitted). Returns the new
    state and the mean input current over the step.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    v1 = v_in if v_next is None else v_next
    vm = 0.5 * (v_in + v1)
    y = s.v_b2
    k1 = memory_rate(p, y, v_in)
    k2 = memory_rate(p, y + 0.5 * dt * k1, vm)
    k3 = memory_rate(p, y + 0.5 * dt * k2, vm)
    k4 = memory_rate(p, y + dt * k3, v1)
    y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    gm2 = p.gm2(y)
    if gm2 < p.eps_gm:
        raise Gm2Collapse(gm2, p.eps_gm)
    q = p.c_out * (v1 - p.gm3 / gm2 * v1)
    new = MemcapState(v_b2=y, phi=s.phi + 0.5 * dt * (v_in + v1), q=q)
    return new, (q - s.q) / dt


def structural_system(p, source):
    """State system for a memcapacitor driven directly by a voltage source.

    The single state is ``v_b2``; taps give ``v_in``, ``v_a``, ``q``,
    ``c_m`` and the analytic input current ``i_in = d(C_m v)/dt``.
    """
    p.check_operating_point()
    a2, off2, g, gm3 = _rate_coefficients(p)
    eps = p.eps_gm
    c_out = p.c_out

    def derivative(t, y):
        gm2 = a2 * (y[0] - off2)
        if gm2 < eps:
            raise Gm2Collapse(gm2, eps, t)
        return np.array([-g * gm3 / gm2 * source(t)])

    def _gm2(Y):
        return a2 * (Y[:, 0] - off2)

    def tap_q(t, Y):
        return c_out * source(t) * (1.0 - gm3 / _gm2(Y))

    def tap_i(t, Y):
        gm2 = _gm2(Y)
        v = source(t)
        rate = -g * gm3 / gm2 * v
        dcm = c_out * gm3 * a2 / gm2**2 * rate
        return dcm * v + c_out * (1.0 - gm3 / gm2) * source.derivative(t)

    taps = {
        "v_in": lambda t, Y: source(t),
        "v_a": lambda t, Y: -gm3 / _gm2(Y) * source(t),
        "q": tap_q,
        "i_in": tap_i,
        "c_m": lambda t, Y: c_out * (1.0 - gm3 / _gm2(Y)),
    }
    return StateSystem(derivative, ("v_b2",), taps)


def default_dt(source, points_per_period=2000):
    """T/2000 of the fastest period, and no more than a fifth of a pulse edge."""
    if isinstance(source, Pulse):
        dt = source.period / points_per_period
        edges = [e for e in (source.rise, source.fall) if e > 0]
        if edges:
            dt = min(dt, min(edges) / 5.0)
        return dt
    period = fastest_period(source)
    if period is None:
        raise ValueError("a DC source needs an explicit dt")
    return period / points_per_period


def simulate(p, source, t_stop, dt=None, stride=1, integrator=integrate):
    """Drive the structural model from rest; returns a Trace.

    Channels: ``v_in, v_a, q, i_in, c_m, v_b2, phi_in, sigma``.
    """
    dt = default_dt(source) if dt is None else dt
    sys = structural_system(p, source)
    tr = integrator(sys, [p.vb2_init], SolveConfig(0.0, t_stop, dt, stride))
    return tr.with_integrals("v_in", "q")


# --------------------------------------------------------------------------
# non-ideal admittance
# --------------------------------------------------------------------------
def _parallel(*rs):
    g = sum(0.0 if math.isinf(r) else 1.0 / r for r in rs)
    return math.inf if g == 0 else 1.0 / g


@dataclass(frozen=True)
class NonIdealNetwork:
    """Node parasitics of the emulator, each an R ∥ C pair.

    ``r01, c_equ`` sit on the integrator node (C_equ includes C_int),
    ``r02, c02`` on the OTA2/OTA3 node and ``r03, c03`` on the input node.
    """

    r01: float
    c_equ: float
    r02: float = math.inf
    c02: float = 0.0
    r03: float = math.inf
    c03: float = 0.0
    r_s: float = 0.0

    @classmethod
    def from_parasitics(cls, p, par=None, r_s=0.0):
        par = OtaParasitics.typical() if par is None else par
        return cls(
            r01=par.r_o,
            c_equ=p.c_int + par.c_o,
            r02=_parallel(par.r_i, par.r_i, par.r_o),
            c02=2.0 * par.c_i + par.c_o,
            r03=par.r_i,
            c03=par.c_i,
            r_s=r_s,
        )

    @classmethod
    def ideal(cls, p):
        return cls(r01=math.inf, c_equ=p.c_int)

    @staticmethod
    def _admittance(r, c, omega):
        g = 0.0 if math.isinf(r) else 1.0 / r
        return complex(g, omega * c)

    def y02(self, omega):
        return self._admittance(self.r02, self.c02, omega)

    def y03(self, omega):
        return self._admittance(self.r03, self.c03, omega)

    def current_divider(self, omega):
        """Fraction of OTA1's output current that charges C_equ."""
        if math.isinf(self.r01):
            return 1.0 + 0.0j
        yc = 1j * omega * self.c_equ
        return yc / (1.0 / self.r01 + yc)

    def beta1(self, p, omega):
        """Input-node loading factor; exactly 1 for a zero-impedance source."""
        y02 = self.y02(omega)
        inner = 1j * omega * p.c_out * (1.0 - p.gm3 / (p.gm2_0 + y02)) + self.y03(omega)
        return 1.0 + self.r_s * inner


def nonideal_terms(p, net, gamma, phi, omega):
    """Leakage and memcapacitive parts of ``I_in / V_in`` (siemens)."""
    beta1 = net.beta1(p, omega)
    rho = net.current_divider(omega)
    _, sgn = _offset_and_sign(p)
    x = p.flux_coupling(net.c_equ)
    flux_term = sgn * gamma * rho * x * phi / beta1
    mem = 1j * omega * (p.c_out * _bracket(p, flux_term)) / beta1
    leak = net.y03(omega) / beta1
    return leak, mem


def memcapacitance_nonideal(p, net, gamma, phi, omega):
    """Small-signal ``I_in / V_in`` with OTA roll-off ``gamma`` and parasitics.

    In the ideal limit (open resistances, no parasitic capacitance, zero
    source resistance, ``gamma = 1``) this is exactly
    ``jω · memcapacitance_ideal(p, phi)``.
    """
    leak, mem = nonideal_terms(p, net, gamma, phi, omega)
    return leak + mem


# --------------------------------------------------------------------------
# composition and extraction
# --------------------------------------------------------------------------
_ADDITIVE = ("q", "i_in", "c_m", "sigma")


def parallel_compose(traces):
    """Parallel connection of devices sharing one drive: charges add."""
    traces = list(traces)
    if not traces:
        raise ValueError("need at least one trace")
    base = traces[0]
    for tr in traces[1:]:
        if not np.array_equal(tr.t, base.t):
            raise ValueError("time grids differ")
        if not np.array_equal(tr["v_in"], base["v_in"]):
            raise ValueError("parallel devices must see the same v_in")
    channels = {"v_in": base["v_in"]}
    if "phi_in" in base:
        channels["phi_in"] = base["phi_in"]
    for name in _ADDITIVE:
        if all(name in tr for tr in traces):
            channels[name] = np.sum([tr[name] for tr in traces], axis=0)
    return Trace(base.t, channels)


def extract_memcapacitance_from_pulse(trace, pulse_amplitude, on_fraction=0.5):
    """Memcapacitance seen by a pulse drive.

    While the drive is above ``on_fraction`` of the pulse amplitude the value
    is ``q / v_in`` (dividing by the instantaneous drive corrects the edges);
    between pulses the last ON value is held.
    """
    for name in ("q", "v_in"):
        if name not in trace:
            raise KeyError(f"trace is missing channel {name!r}")
    if pulse_amplitude == 0:
        raise ValueError("pulse amplitude must be nonzero")
    v = np.asarray(trace["v_in"])
    q = np.asarray(trace["q"])
    on = v / pulse_amplitude >= on_fraction
    if not np.any(on):
        raise ValueError("the trace never reaches the ON level")
    idx = np.where(on, np.arange(v.size), -1)
    np.maximum.accumulate(idx, out=idx)
    first = int(np.flatnonzero(on)[0])
    idx[:first] = first
    return q[idx] / v[idx]


def on_intervals(mask):
    """``(start, stop)`` index pairs of the True runs in a boolean mask."""
    m = np.asarray(mask, dtype=np.int8)
    d = np.diff(np.concatenate(([0], m, [0])))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))
