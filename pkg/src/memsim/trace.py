"""Uniformly sampled multi-channel time series and the integral primitive."""
import csv
import io
import os

import numpy as np


def running_integral(samples, dt):
    """Cumulative trapezoidal integral; the first element is 0.

    >>> running_integral(np.ones(4), 0.5)
    array([0. , 0.5, 1. , 1.5])
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("running_integral needs a non-empty 1-D array")
    if not np.all(np.isfinite(x)):
        raise ValueError("running_integral rejects non-finite samples")
    out = np.empty_like(x)
    out[0] = 0.0
    np.cumsum(0.5 * dt * (x[1:] + x[:-1]), out=out[1:])
    return out


class Trace:
    """Time grid plus named channels of identical length.

    Arrays are stored read-only; transforms return new traces.
    """

    def __init__(self, t, channels):
        t = np.array(t, dtype=float)
        if t.ndim != 1:
            raise ValueError("time grid must be 1-D")
        data = {}
        for name, values in channels.items():
            arr = np.array(values, dtype=float)
            if arr.shape != t.shape:
                raise ValueError(
                    f"channel {name!r} has length {arr.size}, time grid has {t.size}"
                )
            arr.setflags(write=False)
            data[name] = arr
        t.setflags(write=False)
        self._t = t
        self._channels = data

    @property
    def t(self):
        return self._t

    @property
    def dt(self):
        if self._t.size < 2:
            return float("nan")
        return float(self._t[1] - self._t[0])

    @property
    def names(self):
        return tuple(self._channels)

    def __len__(self):
        return self._t.size

    def __getitem__(self, name):
        return self._channels[name]

    def __contains__(self, name):
        return name in self._channels

    def get(self, name, default=None):
        return self._channels.get(name, default)

    def with_channels(self, **extra):
        merged = dict(self._channels)
        merged.update(extra)
        return Trace(self._t, merged)

    def select(self, *names):
        return Trace(self._t, {n: self._channels[n] for n in names})

    def rename(self, mapping):
        return Trace(self._t, {mapping.get(k, k): v for k, v in self._channels.items()})

    def window(self, start=None, stop=None):
        """Sub-trace by sample index (python slice semantics)."""
        sl = slice(start, stop)
        return Trace(self._t[sl], {k: v[sl] for k, v in self._channels.items()})

    def last(self, duration):
        """Trailing sub-trace covering ``duration`` seconds (whole samples)."""
        n = int(round(duration / self.dt))
        if n > len(self) or n < 1:
            raise ValueError(f"trace of {len(self)} samples cannot supply {n}")
        return self.window(len(self) - n, None)

    def with_integrals(self, v="v_in", q="q"):
        """Add ``phi_in`` and ``sigma`` as trapezoidal running integrals."""
        extra = {}
        if v in self:
            extra["phi_in"] = running_integral(self[v], self.dt)
        if q in self:
            extra["sigma"] = running_integral(self[q], self.dt)
        return self.with_channels(**extra)

    def equals(self, other):
        return (
            np.array_equal(self._t, other._t)
            and self.names == other.names
            and all(np.array_equal(self[n], other[n]) for n in self.names)
        )

    # -- CSV ---------------------------------------------------------------
    def write_csv(self, stream):
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(("t",) + self.names)
        cols = [self._t] + [self._channels[n] for n in self.names]
        for row in zip(*cols):
            w.writerow([repr(float(x)) for x in row])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)

    def to_csv_string(self):
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    def to_dict(self):
        return {"t": self._t.tolist(), **{k: v.tolist() for k, v in self._channels.items()}}

    @classmethod
    def read_csv(cls, path_or_stream):
        if isinstance(path_or_stream, (str, os.PathLike)):
            with open(path_or_stream, newline="") as fh:
                return cls._read(fh)
        return cls._read(path_or_stream)

    @classmethod
    def _read(cls, fh):
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t":
            raise ValueError("trace CSV must start with a 't' column")
        rows = np.array([[float(x) for x in r] for r in reader if r], dtype=float)
        if rows.size == 0:
            rows = rows.reshape(0, len(header))
        return cls(rows[:, 0], {name: rows[:, i + 1] for i, name in enumerate(header[1:])})

    def __repr__(self):
        return f"Trace({len(self)} samples, dt={self.dt:.3g}, channels={list(self.names)})"
