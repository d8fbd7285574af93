"""Transient engine for netlists.

Nodal formulation. Node voltages are split three ways:

* source nodes, known from their waveform;
* dynamic nodes, touched by at least one capacitor or memcapacitor, whose
  voltages are states;
* algebraic nodes (resistors and inductors only), solved from KCL at every
  evaluation.

With ``C(x)`` the capacitance matrix on the dynamic nodes (memcapacitors
contribute ``C_m(v_b2)``), KCL reads::

    C(x) dv_D/dt = -C_DS dv_S/dt - G_D v - B_D i_L - Σ C_m'(x) x' v_m

Inductor currents, memcap memory voltages and filter states complete the
state vector. Filters and multipliers are signal blocks: they read node
voltages or element currents and never load the circuit.
"""
from dataclasses import dataclass, replace
import math

import numpy as np

from .errors import Gm2Collapse, SimulationError
from .memcap import MemcapParams
from .netlist import (DEVICE_CHANNELS, GROUND, NetlistError, ParseError,
                      _CHANNEL, _signal_node, validate)
from .ota import OtaParams, SQRT2
from .solver import SolveConfig, StateSystem, integrate
from .trace import Trace, running_integral
from .waveforms import Constant, Pulse, Sine, SumOfSines, fastest_period
from .memcap import default_dt


def source_waveform(decl):
    """Waveform object for a ``source`` declaration."""
    g = decl.get
    if decl.kind == "sine":
        return Sine(g("amp"), g("freq"), g("phase"), g("offset"))
    if decl.kind == "pulse":
        return Pulse(high=g("high"), period=g("period"), width=g("width"),
                     rise=g("rise"), fall=g("fall"), delay=g("delay"), low=g("low"))
    if decl.kind == "sum":
        phases = g("phases") or (0.0,) * len(g("amps"))
        return SumOfSines(tuple(Sine(a, f, p) for a, f, p in
                                zip(g("amps"), g("freqs"), phases)))
    return Constant(g("value"))


def memcap_params(decl):
    g = decl.get
    base = OtaParams(k=g("k"), v_ss=g("vss"), v_dd=g("vdd"), v_th=g("vth"))
    return MemcapParams(
        ota1=base.with_bias(g("vb1")), ota2=base.with_bias(g("vb2")),
        ota3=base.with_bias(g("vb3")), c_int=g("c_int"), c_out=g("c_out"),
        c_aux=g("c_aux"), topology=g("topology"),
    )


@dataclass
class _Mem:
    name: str
    a: int
    b: int
    p: MemcapParams
    a2: float
    off2: float
    g: float
    gm3: float
    state: int


class Circuit:
    """Runnable form of a validated :class:`~memsim.netlist.CircuitSpec`.

    ``memcaps`` optionally replaces the parameters of named memcaps (used by
    Monte Carlo); ``sources`` optionally replaces named waveforms.
    """

    def __init__(self, spec, memcaps=None, sources=None):
        self.spec = spec
        memcaps = memcaps or {}
        sources = sources or {}
        nodes = []
        for d in spec.sources + spec.elements:
            for n in d.nodes():
                if n != GROUND and n not in nodes:
                    nodes.append(n)
        self.sources = {s.name: sources.get(s.name) or source_waveform(s) for s in spec.sources}
        self.source_nodes = [s.node for s in spec.sources]
        cap_nodes = set()
        for e in spec.elements:
            if e.kind in ("capacitor", "memcap"):
                cap_nodes.update(n for n in e.nodes() if n != GROUND)
        self.dyn_nodes = [n for n in nodes if n not in self.source_nodes and n in cap_nodes]
        self.alg_nodes = [n for n in nodes if n not in self.source_nodes and n not in cap_nodes]
        self.all_nodes = self.source_nodes + self.dyn_nodes + self.alg_nodes
        self.index = {n: i for i, n in enumerate(self.all_nodes)}
        self.nS, self.nD, self.nA = len(self.source_nodes), len(self.dyn_nodes), len(self.alg_nodes)
        nN = len(self.all_nodes)

        idx = lambda n: -1 if n == GROUND else self.index[n]
        names = []
        # dynamic node voltages first
        names += [f"v:{n}" for n in self.dyn_nodes]
        self.G = np.zeros((nN, nN))
        self.Cfix = np.zeros((nN, nN))
        self.resistors, self.capacitors, self.inductors, self.mems = [], [], [], []
        self.filters, self.mults = [], []
        init = [0.0] * self.nD
        node_ic = {}
        for e in spec.elements:
            g = e.get
            if e.kind == "resistor":
                a, b = idx(g("a")), idx(g("b"))
                self._stamp(self.G, a, b, 0.0 if math.isinf(g("r")) else 1.0 / g("r"))
                self.resistors.append((e.name, a, b, g("r")))
            elif e.kind == "capacitor":
                a, b = idx(g("a")), idx(g("b"))
                self._stamp(self.Cfix, a, b, g("c"))
                self.capacitors.append((e.name, a, b, g("c")))
                self._ic(node_ic, g("a"), g("b"), g("v0"))
            elif e.kind == "inductor":
                self.inductors.append((e.name, idx(g("a")), idx(g("b")), g("l"), len(names)))
                names.append(f"i:{e.name}")
                init.append(g("i0"))
            elif e.kind == "memcap":
                p = memcaps.get(e.name) or memcap_params(e)
                p.check_operating_point()
                o2 = p.ota2
                self.mems.append(_Mem(
                    e.name, idx(g("plus")), idx(g("minus")), p, o2.k / SQRT2,
                    o2.v_ss + 2.0 * o2.v_th, -p.topology.sign * p.gm1 / p.c_int,
                    p.gm3, len(names)))
                names.append(f"vb2:{e.name}")
                init.append(p.vb2_init)
            elif e.kind == "filter":
                self.filters.append((e.name, g("out"), g("in"), g("type"),
                                     2.0 * math.pi * g("f0"), g("q"), len(names)))
                names += [f"x1:{e.name}", f"x2:{e.name}"]
                init += [0.0, 0.0]
            elif e.kind == "multiplier":
                self.mults.append((e.name, g("out"), g("a"), g("b"), g("gain")))
        for n, v in node_ic.items():
            if n in self.dyn_nodes:
                init[self.dyn_nodes.index(n)] = v
        self.state_names = tuple(names)
        self.init = np.array(init, dtype=float)
        self._order_multipliers()

        S, D, A = slice(0, self.nS), slice(self.nS, self.nS + self.nD), slice(self.nS + self.nD, nN)
        self._S, self._D, self._A = S, D, A
        if self.nA:
            gaa = self.G[A, A]
            if np.linalg.matrix_rank(gaa) < self.nA:
                raise NetlistError([ParseError(1, 1, "BadValue",
                                   "a node has neither a capacitive nor a resistive path")])
            self._gaa_inv = np.linalg.inv(gaa)
        if self.nD and not self.mems and np.linalg.matrix_rank(self.Cfix[D, D]) < self.nD:
            raise NetlistError([ParseError(1, 1, "BadValue", "singular capacitance matrix")])

    @staticmethod
    def _stamp(m, a, b, val):
        if a >= 0:
            m[a, a] += val
        if b >= 0:
            m[b, b] += val
        if a >= 0 and b >= 0:
            m[a, b] -= val
            m[b, a] -= val

    @staticmethod
    def _ic(table, a, b, v0):
        if v0 == 0:
            return
        if b == GROUND:
            table[a] = v0
        elif a == GROUND:
            table[b] = -v0

    def _order_multipliers(self):
        pending = list(self.mults)
        known = {f[1] for f in self.filters}
        ordered = []
        while pending:
            ready = [m for m in pending
                     if all(_signal_node(r)[0] != "node" or _signal_node(r)[1] not in
                            {p[1] for p in pending} for r in (m[2], m[3]))]
            if not ready:
                raise NetlistError([ParseError(1, 1, "BadValue", "multipliers form a loop")])
            for m in ready:
                pending.remove(m)
                ordered.append(m)
                known.add(m[1])
        self.mults = ordered

    # ------------------------------------------------------------------
    def evaluate(self, t, y, observe=False):
        """State derivative, plus a dict of observables when ``observe``."""
        nS, nD = self.nS, self.nD
        nN = len(self.all_nodes)
        v = np.empty(nN)
        vdot = np.zeros(nN)
        for i, s in enumerate(self.spec.sources):
            src = self.sources[s.name]
            v[i] = src(t)
            vdot[i] = src.derivative(t)
        v[nS:nS + nD] = y[:nD]
        il = np.array([y[k] for *_, k in self.inductors]) if self.inductors else None
        inj = np.zeros(nN)  # current leaving each node through inductors
        for (name, a, b, l, k) in self.inductors:
            if a >= 0:
                inj[a] += y[k]
            if b >= 0:
                inj[b] -= y[k]
        if self.nA:
            A = self._A
            rhs = -(self.G[A, :nS + nD] @ v[:nS + nD]) - inj[A]
            v[A] = self._gaa_inv @ rhs

        dy = np.empty_like(y)
        vm = lambda a, b: (v[a] if a >= 0 else 0.0) - (v[b] if b >= 0 else 0.0)
        # memcaps: capacitance stamp and the C_m' x' v current
        C = self.Cfix.copy() if self.mems else self.Cfix
        extra = np.zeros(nN)
        mem_obs = []
        for m in self.mems:
            ve = vm(m.a, m.b)
            x = y[m.state]
            gm2 = m.a2 * (x - m.off2)
            if gm2 < m.p.eps_gm:
                raise Gm2Collapse(gm2, m.p.eps_gm, t)
            rate = -m.g * m.gm3 / gm2 * ve
            dy[m.state] = rate
            cm = m.p.c_out * (1.0 - m.gm3 / gm2)
            dcm = m.p.c_out * m.gm3 * m.a2 / gm2 ** 2 * rate
            self._stamp(C, m.a, m.b, cm)
            i_extra = dcm * ve
            if m.a >= 0:
                extra[m.a] += i_extra
            if m.b >= 0:
                extra[m.b] -= i_extra
            mem_obs.append((ve, cm, dcm, x))
        if nD:
            D = self._D
            rhs = -(C[D, :nS] @ vdot[:nS]) - self.G[D, :] @ v - inj[D] - extra[D]
            vdot[D] = np.linalg.solve(C[D, D], rhs)
            dy[:nD] = vdot[D]
        for (name, a, b, l, k) in self.inductors:
            dy[k] = vm(a, b) / l

        # element currents (a -> b)
        currents = {}

        def dvm(a, b):
            return (vdot[a] if a >= 0 else 0.0) - (vdot[b] if b >= 0 else 0.0)

        need_currents = observe or any(_signal_node(f[2])[0] == "i" for f in self.filters) \
            or any(_signal_node(r)[0] == "i" for m in self.mults for r in (m[2], m[3]))
        if need_currents:
            for (name, a, b, r) in self.resistors:
                currents[name] = 0.0 if math.isinf(r) else vm(a, b) / r
            for (name, a, b, c) in self.capacitors:
                currents[name] = c * dvm(a, b)
            for (name, a, b, l, k) in self.inductors:
                currents[name] = y[k]
            for m, (ve, cm, dcm, x) in zip(self.mems, mem_obs):
                currents[m.name] = cm * dvm(m.a, m.b) + dcm * ve
            for i, s in enumerate(self.spec.sources):
                currents[s.name] = self._leaving(i, currents)

        signals = {}

        def sig(ref):
            kind, name = _signal_node(ref)
            if kind == "i":
                return currents[name]
            if name == GROUND:
                return 0.0
            if name in signals:
                return signals[name]
            return v[self.index[name]]

        for (name, out, inp, kind, w0, q, k) in self.filters:
            signals[out] = y[k] if kind == "lowpass2" else y[k + 1] / q
        for (name, out, a, b, gain) in self.mults:
            signals[out] = gain * sig(a) * sig(b)
        for (name, out, inp, kind, w0, q, k) in self.filters:
            u = sig(inp)
            dy[k] = w0 * y[k + 1]
            dy[k + 1] = w0 * (u - y[k] - y[k + 1] / q)
        if not observe:
            return dy
        obs = {f"v({n})": v[self.index[n]] for n in self.all_nodes}
        obs.update({f"v({n})": val for n, val in signals.items()})
        obs.update({f"i({n})": val for n, val in currents.items()})
        for m, (ve, cm, dcm, x) in zip(self.mems, mem_obs):
            obs[f"q({m.name})"] = cm * ve
            obs[f"cm({m.name})"] = cm
            obs[f"vb2({m.name})"] = x
            obs[f"_ve({m.name})"] = ve
        return dy, obs

    def _leaving(self, i, currents):
        """Current a source pushes into its node: sum of element currents leaving."""
        total = 0.0
        for e in self.spec.elements:
            if e.kind in ("filter", "multiplier"):
                continue
            keys = ("plus", "minus") if e.kind == "memcap" else ("a", "b")
            a, b = (-1 if e.get(k) == GROUND else self.index[e.get(k)] for k in keys)
            if a == i:
                total += currents[e.name]
            if b == i:
                total -= currents[e.name]
        return total

    def system(self):
        return StateSystem(lambda t, y: self.evaluate(t, y), self.state_names)

    def default_dt(self):
        dts = []
        for src in self.sources.values():
            if fastest_period(src) is not None:
                dts.append(default_dt(src))
        for (_, _, _, _, w0, _, _) in self.filters:
            dts.append(2.0 * math.pi / w0 / 200.0)
        if not dts:
            raise ValueError("no periodic source or filter sets a time scale; give dt")
        return min(dts)

    def run(self, tstop, dt=None, tstart=0.0, stride=1, record=None):
        """Transient run; returns a Trace of the requested channels."""
        dt = self.default_dt() if dt is None else dt
        raw = integrate(self.system(), self.init, SolveConfig(0.0, tstop, dt, int(stride)))
        ys = np.column_stack([raw[n] for n in self.state_names]) if self.state_names \
            else np.zeros((len(raw), 0))
        rows = [self.evaluate(t, y, observe=True)[1] for t, y in zip(raw.t, ys)]
        keys = list(rows[0])
        table = {k: np.array([r[k] for r in rows]) for k in keys}
        for m in self.mems:
            table[f"phi({m.name})"] = running_integral(table[f"_ve({m.name})"], dt)
            table[f"sigma({m.name})"] = running_integral(table[f"q({m.name})"], dt)
        chans = self.expand_channels(record)
        tr = Trace(raw.t, {c: table[c] for c in chans})
        if tstart > 0:
            tr = tr.window(int(np.searchsorted(tr.t, tstart - 0.5 * dt)), None)
        return tr

    def expand_channels(self, record=None):
        record = record or self.spec.records
        mem_names = [m.name for m in self.mems]
        if not record:
            out = [f"v({n})" for n in self.all_nodes]
            out += [f"v({f[1]})" for f in self.filters] + [f"v({m[1]})" for m in self.mults]
            for n in mem_names:
                out += [f"q({n})", f"i({n})", f"cm({n})", f"phi({n})", f"sigma({n})", f"vb2({n})"]
            return out
        out = []
        for ch in record:
            fam, arg = _CHANNEL.match(ch).groups()
            if arg is not None:
                out.append(f"{fam}({arg})")
            elif fam in DEVICE_CHANNELS:
                out += [f"{fam}({n})" for n in mem_names]
            elif fam == "i":
                out += [f"i({n})" for n in mem_names]
            else:
                out += [f"v({n})" for n in self.all_nodes]
                out += [f"v({f[1]})" for f in self.filters] + [f"v({m[1]})" for m in self.mults]
        return list(dict.fromkeys(out))


# --------------------------------------------------------------------------
# analysis directives
# --------------------------------------------------------------------------
def _with_field(spec, target, value):
    name, _, key = target.partition(".")
    def swap(d):
        if d.name != name:
            return d
        fields = dict(d.fields)
        fields[key] = value
        return replace(d, fields=tuple((k, fields[k]) for k in d.schema if k in fields))
    return replace(spec, sources=tuple(swap(d) for d in spec.sources),
                   elements=tuple(swap(d) for d in spec.elements))


def _loop_summary(circ, tr):
    """Loop metrics of each memcap over the last period of the slowest sine."""
    from .analysis import loop_metrics
    from .errors import TooFewSamples
    periods = [getattr(s, "period", None) for s in circ.sources.values()
               if isinstance(s, (Sine, SumOfSines))]
    periods = [p for p in periods if p]
    out = {}
    if not periods:
        return out
    period = max(periods)
    for m in circ.mems:
        qn = f"q({m.name})"
        if qn not in tr:
            continue
        a = tr[f"v({circ.all_nodes[m.a]})"] if m.a >= 0 else 0.0 * tr.t
        b = tr[f"v({circ.all_nodes[m.b]})"] if m.b >= 0 else 0.0 * tr.t
        if np.ndim(a) == 0 or np.ndim(b) == 0:
            continue
        sub = Trace(tr.t, {"v": np.asarray(a) - np.asarray(b), "q": tr[qn]})
        try:
            out[m.name] = loop_metrics(sub, period, v="v", q="q").to_dict()
        except TooFewSamples as e:
            out[m.name] = {"skipped": str(e)}
    return out


def _transient(spec, a, memcaps=None, sources=None, record=None):
    circ = Circuit(spec, memcaps=memcaps, sources=sources)
    record = record or a.get("record") or spec.records or None
    # loop metrics need node voltages and charges whatever is recorded
    full = circ.expand_channels(None)
    tr = circ.run(a.get("tstop"), a.get("dt"), a.get("tstart") or 0.0,
                  int(a.get("stride") or 1), record=full)
    metrics = _loop_summary(circ, tr)
    return tr.select(*circ.expand_channels(record)), metrics


def run_analysis(spec, a, seed=None):
    """Execute one analysis directive; returns ``(trace, metrics, rows)``."""
    if a.kind == "transient":
        tr, metrics = _transient(spec, a)
        return tr, {"loops": metrics}, None
    if a.kind == "sweep":
        rows = []
        for value in a.get("values"):
            sub = validate(_with_field(spec, a.get("target"), value))
            _, metrics = _transient(sub, a)
            row = {"value": value}
            for dev, m in metrics.items():
                for k, v in m.items():
                    if not isinstance(v, (list, tuple)):
                        row[f"{dev}.{k}"] = v
            rows.append(row)
        return None, {"target": a.get("target")}, rows
    if a.kind == "montecarlo":
        from .montecarlo import DEFAULT_SEED, DeviationSpec, sample_params
        seed = int(a.get("seed")) if a.get("seed") is not None else (
            DEFAULT_SEED if seed is None else seed)
        rows = []
        for i in range(int(a.get("n"))):
            mems = {}
            for j, e in enumerate(spec.memcaps()):
                mems[e.name] = sample_params(memcap_params(e), DeviationSpec.TABLE4,
                                             seed, i * len(spec.memcaps()) + j)
            row = {"run": i}
            try:
                _, metrics = _transient(spec, a, memcaps=mems)
                for dev, m in metrics.items():
                    row[f"{dev}.pinch_metric"] = m.get("pinch_metric")
            except SimulationError as err:
                row["error"] = str(err)
            rows.append(row)
        return None, {"seed": seed, "n": int(a.get("n"))}, rows
    if a.kind == "frequency-response":
        from .analysis import fit_sinusoid
        src = spec.element(a.get("source"))
        rows = []
        for f in a.get("freqs"):
            period = 1.0 / f
            sine = Sine(a.get("amp"), f)
            circ = Circuit(spec, sources={src.name: sine})
            n_settle, n_meas = int(a.get("settle")), int(a.get("measure"))
            dt = min(period / 400, circ.default_dt())
            dt = period / math.ceil(period / dt)
            out = a.get("out")
            kind, name = _signal_node(out)
            chan = f"i({name})" if kind == "i" else f"v({name})"
            tr = circ.run((n_settle + n_meas) * period, dt=dt,
                          record=[f"v({src.node})", chan])
            seg = tr.last(n_meas * period)
            a_in, _, _ = fit_sinusoid(seg.t, seg[f"v({src.node})"], f)
            a_out, _, _ = fit_sinusoid(seg.t, seg[chan], f)
            rows.append({"freq": f, "gain_db": 20.0 * math.log10(a_out[0] / a_in[0])})
        return None, {"source": src.name, "out": a.get("out")}, rows
    raise ValueError(f"unknown analysis {a.kind!r}")  # pragma: no cover
