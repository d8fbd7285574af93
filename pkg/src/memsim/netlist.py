"""Line-oriented circuit description language (``.mcir`` files).

One statement per line, ``#`` starts a comment, fields are ``key=value``::

    version 1
    source vin sine amp=350m freq=1meg
    memcap M1 plus=vin minus=0 topology=decremental c_int=240n c_out=500p vb1=640m vb3=640m
    analysis transient tstop=5u dt=0.5n record=q,v,cm

Statements: ``version``, ``param``, ``source``, the element kinds
(``memcap capacitor inductor resistor filter multiplier``), ``analysis`` and
``record``. Node ``0`` is ground. Sources drive their node against ground.

:func:`parse` collects every error in the file before raising
:class:`NetlistError`; :func:`validate` checks connectivity and ranges.
"""
from dataclasses import dataclass, field
import math
import re

from .units import QuantityError, format_quantity, parse_quantity

GROUND = "0"
DEFAULT_Q = 1.0 / math.sqrt(2.0)

ERROR_KINDS = (
    "UnknownElement",
    "BadUnit",
    "MissingField",
    "DuplicateName",
    "DanglingNode",
    "BadNumber",
    "UnknownField",
    "BadValue",
    "Syntax",
)

_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_NODE = re.compile(r"[A-Za-z0-9_]+\Z")
_SIGNAL = re.compile(r"(?:([iv])\(([A-Za-z0-9_]+)\)|([A-Za-z0-9_]+))\Z")
_TARGET = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\.([a-z_0-9]+)\Z")
_CHANNEL = re.compile(r"(q|cm|phi|sigma|vb2|i|v)(?:\(([A-Za-z0-9_]+)\))?\Z")
_TOKENS = re.compile(r"\S+")

# per-memcap channel families; ``v`` and ``i`` also apply to nodes and sources
DEVICE_CHANNELS = ("q", "cm", "phi", "sigma", "vb2")


class ParseError(Exception):
    def __init__(self, line, col, kind, message):
        assert kind in ERROR_KINDS
        self.line = line
        self.col = col
        self.kind = kind
        self.message = message
        super().__init__(f"{line}:{col}: {kind}: {message}")

    def __eq__(self, other):
        return isinstance(other, ParseError) and (
            self.line, self.col, self.kind, self.message
        ) == (other.line, other.col, other.kind, other.message)

    __hash__ = Exception.__hash__


class NetlistError(Exception):
    """One or more parse/validation errors, in source order."""

    def __init__(self, errors):
        self.errors = sorted(errors, key=lambda e: (e.line, e.col))
        super().__init__("\n".join(str(e) for e in self.errors))


# --------------------------------------------------------------------------
# schemas: field -> (type, default). ``REQUIRED`` marks mandatory fields.
# --------------------------------------------------------------------------
REQUIRED = object()

SOURCE_KINDS = {
    "sine": {"amp": ("q", REQUIRED), "freq": ("q", REQUIRED), "phase": ("q", 0.0),
             "offset": ("q", 0.0), "node": ("node", None)},
    "pulse": {"high": ("q", REQUIRED), "period": ("q", REQUIRED),
              "width": ("q", REQUIRED), "rise": ("q", 15e-9), "fall": ("q", 15e-9),
              "delay": ("q", 0.0), "low": ("q", 0.0), "node": ("node", None)},
    "sum": {"amps": ("qlist", REQUIRED), "freqs": ("qlist", REQUIRED),
            "phases": ("qlist", None), "node": ("node", None)},
    "constant": {"value": ("q", REQUIRED), "node": ("node", None)},
}

ELEMENT_KINDS = {
    "memcap": {"plus": ("node", REQUIRED), "minus": ("node", REQUIRED),
               "topology": ("enum:incremental|decremental", REQUIRED),
               "c_int": ("q", REQUIRED), "c_out": ("q", REQUIRED),
               "vb1": ("q", REQUIRED), "vb3": ("q", REQUIRED), "vb2": ("q", 0.64),
               "c_aux": ("q", 500e-12), "k": ("q", 1e-3), "vth": ("q", 0.45),
               "vss": ("q", -1.2), "vdd": ("q", 1.2)},
    "capacitor": {"a": ("node", REQUIRED), "b": ("node", REQUIRED),
                  "c": ("q", REQUIRED), "v0": ("q", 0.0)},
    "inductor": {"a": ("node", REQUIRED), "b": ("node", REQUIRED),
                 "l": ("q", REQUIRED), "i0": ("q", 0.0)},
    "resistor": {"a": ("node", REQUIRED), "b": ("node", REQUIRED),
                 "r": ("q", REQUIRED)},
    "filter": {"in": ("signal", REQUIRED), "out": ("name", REQUIRED),
               "type": ("enum:lowpass2|bandpass2", REQUIRED),
               "f0": ("q", REQUIRED), "q": ("q", DEFAULT_Q)},
    "multiplier": {"a": ("signal", REQUIRED), "b": ("signal", REQUIRED),
                   "out": ("name", REQUIRED), "gain": ("q", 1.0)},
}

ANALYSIS_KINDS = {
    "transient": {"tstop": ("q", REQUIRED), "dt": ("q", None), "tstart": ("q", 0.0),
                  "stride": ("q", 1.0), "record": ("channels", None)},
    "sweep": {"target": ("target", REQUIRED), "values": ("qlist", REQUIRED),
              "tstop": ("q", REQUIRED), "dt": ("q", None), "record": ("channels", None)},
    "montecarlo": {"n": ("q", REQUIRED), "tstop": ("q", REQUIRED), "dt": ("q", None),
                   "seed": ("q", None), "record": ("channels", None)},
    "frequency-response": {"source": ("name", REQUIRED), "out": ("signal", REQUIRED),
                           "freqs": ("qlist", REQUIRED), "settle": ("q", 5.0),
                           "measure": ("q", 5.0), "amp": ("q", 1.0)},
}


# --------------------------------------------------------------------------
# spec types
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class Decl:
    """A source, element or analysis statement.

    ``fields`` holds only what was written; defaults come from :meth:`get`.
    """

    stmt: str  # "source", "element" or "analysis"
    kind: str
    name: str
    fields: tuple  # ((key, value), ...) in schema order
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)
    field_cols: tuple = field(default=(), compare=False)

    @property
    def schema(self):
        table = {"source": SOURCE_KINDS, "element": ELEMENT_KINDS,
                 "analysis": ANALYSIS_KINDS}[self.stmt]
        return table[self.kind]

    def get(self, key):
        for k, v in self.fields:
            if k == key:
                return v
        if key not in self.schema:
            return None
        default = self.schema[key][1]
        return None if default is REQUIRED else default

    def has(self, key):
        return any(k == key for k, _ in self.fields)

    def col_of(self, key):
        return dict(self.field_cols).get(key, self.col)

    def as_dict(self):
        return {k: self.get(k) for k in self.schema}

    @property
    def node(self):
        """Node driven by a source (defaults to the source's name)."""
        return self.get("node") or self.name

    def nodes(self):
        if self.stmt == "source":
            return [self.node]
        if self.stmt != "element":
            return []
        return [self.get(k) for k, (t, _) in self.schema.items() if t == "node"]

    def signals(self):
        return [self.get(k) for k, (t, _) in self.schema.items()
                if t == "signal" and self.get(k) is not None]


@dataclass(frozen=True)
class CircuitSpec:
    version: int = 1
    params: tuple = ()  # ((name, value), ...)
    sources: tuple = ()
    elements: tuple = ()
    analyses: tuple = ()
    records: tuple = ()
    record_line: int = field(default=0, compare=False)

    def element(self, name):
        for d in self.sources + self.elements:
            if d.name == name:
                return d
        raise KeyError(name)

    def memcaps(self):
        return [e for e in self.elements if e.kind == "memcap"]

    def param(self, name):
        return dict(self.params)[name]


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------
class _Line:
    def __init__(self, number, text):
        self.number = number
        code = text.split("#", 1)[0]
        self.tokens = [(m.group(), m.start() + 1) for m in _TOKENS.finditer(code)]


def _convert(kind, raw, line, col, errors):
    """Typed value for one field, or None after recording an error."""
    def bad(k, msg, offset=0):
        errors.append(ParseError(line, col + offset, k, msg))

    if kind == "q":
        try:
            return parse_quantity(raw)
        except QuantityError as e:
            bad(e.kind, str(e), e.offset)
            return None
    if kind == "qlist":
        out, offset = [], 0
        for part in raw.split(","):
            try:
                out.append(parse_quantity(part))
            except QuantityError as e:
                bad(e.kind, str(e), _part_offset(part, offset, e.offset))
                return None
            offset += len(part) + 1
        return tuple(out)
    if kind == "node":
        if not _NODE.match(raw):
            bad("BadValue", f"invalid node name {raw!r}")
            return None
        return raw
    if kind == "name":
        if not _NAME.match(raw):
            bad("BadValue", f"invalid name {raw!r}")
            return None
        return raw
    if kind == "signal":
        if not _SIGNAL.match(raw):
            bad("BadValue", f"invalid signal reference {raw!r}")
            return None
        return raw
    if kind == "target":
        if not _TARGET.match(raw):
            bad("BadValue", f"sweep target must look like NAME.field, got {raw!r}")
            return None
        return raw
    if kind == "channels":
        return _channels(raw.split(","), line, col, errors)
    if kind.startswith("enum:"):
        choices = kind[5:].split("|")
        if raw.lower() not in choices:
            bad("BadValue", f"expected one of {', '.join(choices)}, got {raw!r}")
            return None
        return raw.lower()
    raise AssertionError(kind)  # pragma: no cover


def _part_offset(part, offset, inner=0):
    """Column offset of a list element; an empty element points at its comma."""
    if not part:
        return max(offset - 1, 0)
    return offset + inner


def _channels(parts, line, col, errors):
    out, offset = [], 0
    for part in parts:
        if not _CHANNEL.match(part):
            errors.append(ParseError(line, col + _part_offset(part, offset), "BadValue",
                                     f"unknown record channel {part!r}"))
            return None
        out.append(part)
        offset += len(part) + 1
    return tuple(out)


def _fields(tokens, schema, line, errors, kw_col):
    """Parse ``key=value`` tokens against a schema."""
    values, cols = {}, {}
    for tok, col in tokens:
        key, eq, raw = tok.partition("=")
        if not eq or not key:
            errors.append(ParseError(line, col, "Syntax", f"expected key=value, got {tok!r}"))
            continue
        key_l = key.lower()
        if key_l not in schema:
            errors.append(ParseError(line, col, "UnknownField", f"unknown field {key!r}"))
            continue
        if key_l in values or key_l in cols:
            errors.append(ParseError(line, col, "DuplicateName", f"field {key!r} given twice"))
            continue
        vcol = col + len(key) + 1
        if not raw:
            errors.append(ParseError(line, col, "MissingField", f"field {key!r} has no value"))
            cols[key_l] = col
            continue
        value = _convert(schema[key_l][0], raw, line, vcol, errors)
        cols[key_l] = vcol
        if value is not None:
            values[key_l] = value
    missing = [k for k, (_, d) in schema.items() if d is REQUIRED and k not in cols]
    for k in missing:
        errors.append(ParseError(line, kw_col, "MissingField", f"missing required field {k!r}"))
    ordered = tuple((k, values[k]) for k in schema if k in values)
    return ordered, tuple((k, cols[k]) for k in schema if k in cols)


def parse_collect(text):
    """Parse without raising: returns ``(spec or None, errors)``."""
    errors = []
    version = 1
    params, sources, elements, analyses, records = [], [], [], [], []
    names = {}
    record_line = 0
    seen_statement = False
    for number, raw_line in enumerate(text.splitlines(), start=1):
        ln = _Line(number, raw_line)
        if not ln.tokens:
            continue
        (kw, kw_col), rest = ln.tokens[0], ln.tokens[1:]
        kwl = kw.lower()
        first = not seen_statement
        seen_statement = True
        if kwl == "version":
            if not first:
                errors.append(ParseError(number, kw_col, "Syntax", "version must be the first statement"))
            if len(rest) != 1 or rest[0][0] != "1":
                col = rest[0][1] if rest else kw_col
                errors.append(ParseError(number, col, "BadValue", "only 'version 1' is supported"))
            continue
        if kwl == "param":
            if not rest:
                errors.append(ParseError(number, kw_col, "MissingField", "param needs name=value"))
            for tok, col in rest:
                key, eq, raw = tok.partition("=")
                if not eq or not _NAME.match(key):
                    errors.append(ParseError(number, col, "Syntax", f"expected name=value, got {tok!r}"))
                    continue
                if key in dict(params):
                    errors.append(ParseError(number, col, "DuplicateName", f"param {key!r} defined twice"))
                    continue
                if not raw:
                    errors.append(ParseError(number, col, "MissingField", f"param {key!r} has no value"))
                    continue
                v = _convert("q", raw, number, col + len(key) + 1, errors)
                if v is not None:
                    params.append((key, v))
            continue
        if kwl == "record":
            if not rest:
                errors.append(ParseError(number, kw_col, "MissingField", "record needs channel names"))
            for tok, col in rest:
                chans = _channels(tok.split(","), number, col, errors)
                if chans:
                    records.extend(chans)
            record_line = record_line or number
            continue
        if kwl in ("source", "analysis"):
            table = SOURCE_KINDS if kwl == "source" else ANALYSIS_KINDS
            if kwl == "source":
                if len(rest) < 2:
                    errors.append(ParseError(number, kw_col, "MissingField", "source needs a name and a kind"))
                    continue
                (name, name_col), (kind, kind_col) = rest[0], rest[1]
                body = rest[2:]
            else:
                if not rest:
                    errors.append(ParseError(number, kw_col, "MissingField", "analysis needs a kind"))
                    continue
                (kind, kind_col) = rest[0]
                name, name_col = f"{kind.lower()}{len(analyses) + 1}", kw_col
                body = rest[1:]
            if kind.lower() not in table:
                errors.append(ParseError(number, kind_col, "UnknownElement", f"unknown {kwl} kind {kind!r}"))
                continue
            kind = kind.lower()
            stmt = kwl
        elif kwl in ELEMENT_KINDS:
            if not rest:
                errors.append(ParseError(number, kw_col, "MissingField", f"{kwl} needs a name"))
                continue
            (name, name_col), body = rest[0], rest[1:]
            if "=" in name:
                errors.append(ParseError(number, name_col, "MissingField", f"{kwl} needs a name before its fields"))
                continue
            kind, stmt, table = kwl, "element", ELEMENT_KINDS
        else:
            errors.append(ParseError(number, kw_col, "UnknownElement", f"unknown statement {kw!r}"))
            continue

        if stmt != "analysis":
            if not _NAME.match(name):
                errors.append(ParseError(number, name_col, "BadValue", f"invalid name {name!r}"))
                continue
            if name in names:
                errors.append(ParseError(number, name_col, "DuplicateName",
                                         f"{name!r} already defined on line {names[name]}"))
                continue
            names[name] = number
        n_err = len(errors)
        fields, cols = _fields(body, table[kind], number, errors, kw_col)
        if len(errors) != n_err:
            continue
        decl = Decl(stmt, kind, name, fields, number, name_col, cols)
        {"source": sources, "element": elements, "analysis": analyses}[stmt].append(decl)

    if errors:
        return None, sorted(errors, key=lambda e: (e.line, e.col))
    spec = CircuitSpec(version, tuple(params), tuple(sources), tuple(elements),
                       tuple(analyses), tuple(records), record_line)
    return spec, []


def parse(text):
    """Parse a netlist; raises :class:`NetlistError` listing every problem."""
    spec, errors = parse_collect(text)
    if errors:
        raise NetlistError(errors)
    return spec


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------
_POSITIVE = {
    "memcap": ("c_int", "c_out", "k", "vth"),
    "capacitor": ("c",),
    "inductor": ("l",),
    "resistor": ("r",),
    "filter": ("f0", "q"),
}


def _signal_node(ref):
    m = _SIGNAL.match(ref)
    if m.group(3) is not None:
        return "node", m.group(3)
    return m.group(1), m.group(2)


def validate(spec):
    """Connectivity, naming and range checks; returns ``spec`` or raises."""
    errors = []
    err = lambda d, key, kind, msg: errors.append(
        ParseError(d.line, d.col_of(key) if key else d.col, kind, msg))

    devices = {d.name: d for d in spec.sources + spec.elements}
    signal_outputs = {}
    for e in spec.elements:
        if e.kind in ("filter", "multiplier"):
            out = e.get("out")
            if out in signal_outputs or out in devices:
                err(e, "out", "DuplicateName", f"signal {out!r} is already defined")
            signal_outputs[out] = e

    # node usage counts
    uses = {}
    for d in spec.sources + spec.elements:
        for n in d.nodes():
            uses[n] = uses.get(n, 0) + 1
    for e in spec.elements:
        for ref in e.signals():
            kind, name = _signal_node(ref)
            if kind in ("node", "v") and name in uses:
                uses[name] += 1
    for n in signal_outputs:
        if n in uses:
            first = signal_outputs[n]
            err(first, "out", "DuplicateName", f"signal {n!r} collides with a circuit node")

    driven = {}
    for s in spec.sources:
        if s.node == GROUND:
            err(s, "node", "BadValue", f"source {s.name} cannot drive ground")
        elif s.node in driven:
            err(s, "node", "DuplicateName", f"node {s.node!r} is driven by two sources")
        driven[s.node] = s

    for d in spec.sources + spec.elements:
        for key, (t, _) in d.schema.items():
            if t == "node" and d.get(key) is not None:
                n = d.get(key)
                if n != GROUND and uses.get(n, 0) < 2:
                    err(d, key, "DanglingNode", f"node {n!r} of {d.name} has only one connection")

    if spec.elements and GROUND not in uses:
        d = spec.elements[0]
        err(d, None, "DanglingNode", "circuit has no ground node '0'")

    for e in spec.elements:
        for key in _POSITIVE.get(e.kind, ()):
            v = e.get(key)
            if not (v > 0 and math.isfinite(v)) and not (key == "r" and v == math.inf):
                err(e, key, "BadValue", f"{e.name}: {key} must be positive, got {v!r}")
        nodes = e.nodes()
        if len(nodes) == 2 and nodes[0] == nodes[1]:
            err(e, None, "BadValue", f"{e.name} is shorted: both terminals on {nodes[0]!r}")
        if e.kind == "memcap":
            vss, vdd, vth, k = e.get("vss"), e.get("vdd"), e.get("vth"), e.get("k")
            if not vdd > vss:
                err(e, "vdd", "BadValue", f"{e.name}: vdd must exceed vss")
            for key in ("vb1", "vb2", "vb3"):
                if not e.get(key) - vss - 2 * vth > 0:
                    err(e, key, "BadValue",
                        f"{e.name}: {key}={e.get(key):g} gives a non-positive transconductance")
        for ref in e.signals():
            kind, name = _signal_node(ref)
            key = next(k for k in e.schema if e.get(k) == ref)
            if kind == "i" and name not in devices:
                err(e, key, "DanglingNode", f"{e.name}: current of unknown element {name!r}")
            elif kind in ("node", "v") and name not in uses and name not in signal_outputs \
                    and name != GROUND:
                err(e, key, "DanglingNode", f"{e.name}: unknown signal {name!r}")

    for s in spec.sources:
        if s.kind == "sum":
            amps, freqs, phases = s.get("amps"), s.get("freqs"), s.get("phases")
            if len(amps) != len(freqs) or (phases is not None and len(phases) != len(amps)):
                err(s, "freqs", "BadValue", f"{s.name}: amps/freqs/phases lengths differ")
            if any(not f > 0 for f in freqs):
                err(s, "freqs", "BadValue", f"{s.name}: frequencies must be positive")
        if s.kind == "sine" and not s.get("freq") > 0:
            err(s, "freq", "BadValue", f"{s.name}: freq must be positive")
        if s.kind == "pulse":
            per, w, r, f = s.get("period"), s.get("width"), s.get("rise"), s.get("fall")
            if not (r >= 0 and f >= 0 and r + f <= w <= per and per > 0):
                err(s, "width", "BadValue",
                    f"{s.name}: need rise, fall >= 0 and rise + fall <= width <= period")

    for a in spec.analyses:
        for key in ("tstop", "dt"):
            v = a.get(key) if key in a.schema else None
            if v is not None and not v > 0:
                err(a, key, "BadValue", f"{a.kind}: {key} must be positive")
        if a.kind == "sweep":
            name, _, attr = a.get("target").partition(".")
            d = devices.get(name)
            if d is None:
                err(a, "target", "DanglingNode", f"sweep target {name!r} is not declared")
            elif attr not in d.schema or d.schema[attr][0] != "q":
                err(a, "target", "UnknownField", f"{name} has no numeric field {attr!r}")
        if a.kind == "frequency-response":
            if a.get("source") not in {s.name for s in spec.sources}:
                err(a, "source", "DanglingNode", f"unknown source {a.get('source')!r}")
            if any(not f > 0 for f in a.get("freqs")):
                err(a, "freqs", "BadValue", "frequencies must be positive")
        if a.kind == "montecarlo":
            n = a.get("n")
            if not (n >= 1 and n == int(n)):
                err(a, "n", "BadValue", "n must be a positive integer")
            if not spec.memcaps():
                err(a, None, "BadValue", "montecarlo needs at least one memcap")
        stride = a.get("stride") if "stride" in a.schema else 1.0
        if not (stride >= 1 and stride == int(stride)):
            err(a, "stride", "BadValue", "stride must be a positive integer")
        chans = a.get("record") if "record" in a.schema else None
        for ch in chans or ():
            _check_channel(ch, spec, devices, uses, signal_outputs,
                           lambda msg: err(a, "record", "DanglingNode", msg))
    for ch in spec.records:
        _check_channel(ch, spec, devices, uses, signal_outputs,
                       lambda msg: errors.append(ParseError(spec.record_line, 1, "DanglingNode", msg)))

    if errors:
        raise NetlistError(errors)
    return spec


def _check_channel(ch, spec, devices, uses, signal_outputs, report):
    fam, arg = _CHANNEL.match(ch).groups()
    if arg is None:
        return
    if fam in DEVICE_CHANNELS:
        d = devices.get(arg)
        if d is None or d.kind != "memcap":
            report(f"channel {ch!r}: {arg!r} is not a memcap")
    elif fam == "i":
        if arg not in devices:
            report(f"channel {ch!r}: unknown element {arg!r}")
    elif arg not in uses and arg not in signal_outputs and arg != GROUND:
        report(f"channel {ch!r}: unknown node {arg!r}")


# --------------------------------------------------------------------------
# formatting
# --------------------------------------------------------------------------
def _fmt_value(kind, v):
    if kind == "q":
        return format_quantity(v)
    if kind == "qlist":
        return ",".join(format_quantity(x) for x in v)
    if kind == "channels":
        return ",".join(v)
    return str(v)


def _fmt_fields(d):
    return " ".join(f"{k}={_fmt_value(d.schema[k][0], v)}" for k, v in d.fields)


def format_spec(spec):
    """Canonical text that :func:`parse` maps back to an equal spec."""
    lines = [f"version {spec.version}"]
    if spec.params:
        lines.append("param " + " ".join(f"{k}={format_quantity(v)}" for k, v in spec.params))
    for s in spec.sources:
        lines.append(f"source {s.name} {s.kind} {_fmt_fields(s)}".rstrip())
    for e in spec.elements:
        lines.append(f"{e.kind} {e.name} {_fmt_fields(e)}".rstrip())
    for a in spec.analyses:
        lines.append(f"analysis {a.kind} {_fmt_fields(a)}".rstrip())
    if spec.records:
        lines.append("record " + " ".join(spec.records))
    return "\n".join(lines) + "\n"


def parse_overrides(pairs):
    """``key=value`` overrides with the netlist's quantity grammar.

    Non-numeric values are kept as strings (for enum-like parameters).
    """
    out = {}
    for i, pair in enumerate(pairs):
        key, eq, raw = pair.partition("=")
        if not eq or not key or not raw:
            raise NetlistError([ParseError(1, 1, "Syntax", f"override {pair!r} is not key=value")])
        try:
            out[key] = parse_quantity(raw)
        except QuantityError as e:
            if re.fullmatch(r"[A-Za-z][A-Za-z0-9_\-]*", raw):
                out[key] = raw
            else:
                raise NetlistError([ParseError(1, len(key) + 2 + e.offset, e.kind, str(e))]) from None
    return out
