"""Engineering-suffix quantities for the netlist/CLI boundary.

Everything inside the engine is plain SI floats. Tokens such as ``220p`` or
``2meg`` are converted here, through :class:`decimal.Decimal`, so that the
scaling is correctly rounded (``220p`` is exactly ``2.2e-10``).
"""
import math
import re
from decimal import Decimal

# exponent of ten per suffix; matched case-insensitively
SUFFIXES = {
    "f": -15,
    "p": -12,
    "n": -9,
    "u": -6,
    "m": -3,
    "k": 3,
    "meg": 6,
    "g": 9,
}

_TOKEN = re.compile(r"^([+-]?[0-9.]*(?:[eE][+-]?[0-9]*)?)([A-Za-z]*)$")
_MANTISSA = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$")


class QuantityError(ValueError):
    """Raised for malformed quantity tokens; ``kind`` is BadUnit or BadNumber."""

    def __init__(self, kind, message, offset=0):
        self.kind = kind
        self.offset = offset
        super().__init__(message)


def parse_quantity(token):
    """Convert a number with an optional engineering suffix to an SI float.

    ``inf`` (optionally signed) is accepted for open-circuit resistances.
    Unit letters after the suffix are rejected: ``350m`` is fine, ``350mV``
    is a ``BadUnit``.
    """
    tok = token.strip()
    if tok.lower() in ("inf", "+inf"):
        return math.inf
    if tok.lower() == "-inf":
        return -math.inf
    m = _TOKEN.match(tok)
    if m is None:
        raise QuantityError("BadNumber", f"malformed number {token!r}")
    mantissa, suffix = m.groups()
    if not _MANTISSA.match(mantissa):
        raise QuantityError("BadNumber", f"malformed number {token!r}")
    exp = 0
    if suffix:
        try:
            exp = SUFFIXES[suffix.lower()]
        except KeyError:
            raise QuantityError(
                "BadUnit", f"unknown suffix {suffix!r} in {token!r}", len(mantissa)
            ) from None
    try:
        value = float(Decimal(mantissa).scaleb(exp))
    except ArithmeticError:  # decimal overflow on absurd exponents
        raise QuantityError("BadNumber", f"malformed number {token!r}") from None
    if not math.isfinite(value):
        raise QuantityError("BadNumber", f"{token!r} overflows a double")
    return value


def format_quantity(value):
    """Shortest token that :func:`parse_quantity` maps back to ``value`` exactly."""
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        raise ValueError("cannot format NaN")
    if value == 0.0:
        return "0"
    base = Decimal(repr(value))
    best = repr(value)
    for suffix, exp in [("", 0)] + list(SUFFIXES.items()):
        mant = base.scaleb(-exp).normalize()
        text = _plain(mant) + suffix
        if len(text) < len(best) and parse_quantity(text) == value:
            best = text
    return best


def _plain(d):
    s = format(d, "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return s
