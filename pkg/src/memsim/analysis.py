"""Post-processing kernels: hysteresis fingerprints, spectra, responses."""
from collections import deque
from dataclasses import asdict, dataclass, field
import math

import numpy as np

from .errors import TooFewSamples
from .waveforms import Sine

MIN_SAMPLES_PER_PERIOD = 64
PINCH_V_EPS = 0.01
CROSSING_Q_TOL = 1e-2
LOBE_AREA_FLOOR = 1e-6


# --------------------------------------------------------------------------
# q-v loops
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class LoopMetrics:
    pinch_metric: float
    lobe_areas: tuple
    linearity_residual: float
    crossing_count: int

    @property
    def lobe_count(self):
        """Lobes whose area is not negligible against the loop's bounding box."""
        return sum(a > self._area_floor for a in self.lobe_areas)

    @property
    def total_area(self):
        return float(sum(self.lobe_areas))

    _area_floor: float = field(default=0.0, repr=False, compare=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("_area_floor")
        d["lobe_areas"] = list(self.lobe_areas)
        d["lobe_count"] = self.lobe_count
        d["total_area"] = self.total_area
        return d


def _zero_crossings(v):
    """Fractional indices where ``v`` changes sign (exact zeros included)."""
    s = np.signbit(v)
    idx = np.flatnonzero(s[1:] != s[:-1])
    out = []
    for i in idx:
        a, b = v[i], v[i + 1]
        frac = 0.0 if a == b else a / (a - b)
        out.append(i + frac)
    return np.array(out)


def _interp(x, fidx):
    i = np.minimum(np.floor(fidx).astype(int), x.size - 2)
    f = fidx - i
    return x[i] * (1.0 - f) + x[i + 1] * f


def _shoelace(x, y):
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def linearity_residual(v, q):
    """``1 - R²`` of the least-squares line through the points."""
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    sv, sq = v.std(), q.std()
    if sv == 0 or sq == 0:
        return 0.0
    r = np.mean((v - v.mean()) * (q - q.mean())) / (sv * sq)
    return float(min(max(1.0 - r * r, 0.0), 1.0))


def lobe_areas(v, q):
    """Areas of the sub-loops between successive v-zero crossings.

    The samples are one period of a closed curve (the last sample connects
    back to the first). Each lobe is closed by the straight segment joining
    its two interpolated crossing points on the v = 0 axis.
    """
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    n = v.size
    vc, qc = np.append(v, v[0]), np.append(q, q[0])
    zc = _zero_crossings(vc)
    if zc.size < 2:
        return (float(_shoelace(v, q)),) if n > 2 else ()
    q_at = _interp(qc, zc)
    areas = []
    for k in range(zc.size):
        a = zc[k]
        b = zc[k + 1] if k + 1 < zc.size else zc[0] + n
        inner = np.arange(math.floor(a) + 1, math.ceil(b))
        inner = inner[(inner > a) & (inner < b)] % n
        xs = np.concatenate(([0.0], v[inner], [0.0]))
        ys = np.concatenate(([q_at[k]], q[inner], [q_at[(k + 1) % zc.size]]))
        areas.append(float(_shoelace(xs, ys)))
    return tuple(areas)


def loop_metrics(trace, period, v="v_in", q="q", method="crossing", v_eps=PINCH_V_EPS):
    """Fingerprint of the last full period of a q-v loop.

    ``method="crossing"`` measures the pinch as the largest ``|q|`` at the
    interpolated zero crossings of ``v``; ``method="window"`` takes the
    largest ``|q|`` among samples with ``|v| < v_eps * max|v|``. Both are
    normalised by the peak ``|q|``.
    """
    dt = trace.dt
    n = int(round(period / dt))
    if n < MIN_SAMPLES_PER_PERIOD:
        raise TooFewSamples(f"{n} samples per period, need {MIN_SAMPLES_PER_PERIOD}")
    if len(trace) < n:
        raise TooFewSamples(f"trace has {len(trace)} samples, one period needs {n}")
    vv = np.asarray(trace[v][-n:], dtype=float)
    qq = np.asarray(trace[q][-n:], dtype=float)
    return _metrics(vv, qq, method, v_eps)


def loop_metrics_arrays(v, q, method="crossing", v_eps=PINCH_V_EPS):
    """As :func:`loop_metrics` for bare arrays spanning exactly one period."""
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    if v.size < MIN_SAMPLES_PER_PERIOD:
        raise TooFewSamples(f"{v.size} samples, need {MIN_SAMPLES_PER_PERIOD}")
    return _metrics(v, q, method, v_eps)


def _metrics(v, q, method, v_eps):
    qmax = np.max(np.abs(q))
    vmax = np.max(np.abs(v))
    closed_v = np.append(v, v[0])
    closed_q = np.append(q, q[0])
    zc = _zero_crossings(closed_v)
    q_at = _interp(closed_q, zc) if zc.size else np.array([])
    if qmax == 0:
        pinch = 0.0
    elif method == "crossing":
        if zc.size:
            pinch = float(np.max(np.abs(q_at)) / qmax)
        else:
            pinch = float(np.abs(q[np.argmin(np.abs(v))]) / qmax)
    elif method == "window":
        near = np.abs(v) < v_eps * vmax
        if not np.any(near):
            near = np.abs(v) == np.min(np.abs(v))
        pinch = float(np.max(np.abs(q[near])) / qmax)
    else:
        raise ValueError(f"unknown pinch method {method!r}")
    crossings = 0
    tol = CROSSING_Q_TOL * qmax
    for i in range(q_at.size):
        for j in range(i + 1, q_at.size):
            if abs(q_at[i] - q_at[j]) <= tol:
                crossings += 1
    areas = lobe_areas(v, q)
    floor = LOBE_AREA_FLOOR * np.ptp(v) * np.ptp(q)
    return LoopMetrics(
        pinch_metric=pinch,
        lobe_areas=areas,
        linearity_residual=linearity_residual(v, q),
        crossing_count=crossings,
        _area_floor=float(floor),
    )


# --------------------------------------------------------------------------
# spectra
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class Spectrum:
    """One-sided magnitude spectrum with a rectangular window.

    Magnitudes are raw ``|X_k|``, so a bin-aligned sine of amplitude A gives
    ``N·A/2``.
    """

    freqs: np.ndarray
    magnitudes: np.ndarray
    n: int
    dt: float
    window: str = "rectangular"

    @property
    def resolution(self):
        return 1.0 / (self.n * self.dt)

    def bin_of(self, freq):
        return int(round(freq / self.resolution))

    def magnitude_at(self, freq):
        return float(self.magnitudes[self.bin_of(freq)])

    def db(self, ref=None):
        ref = np.max(self.magnitudes) if ref is None else ref
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(self.magnitudes / ref)

    def peaks(self, count=None, rel_threshold=0.0, guard_bins=1, include_dc=False):
        """Bins that dominate their ±guard_bins neighbourhood, largest first."""
        m = self.magnitudes
        lo = 0 if include_dc else 1
        found = []
        top = np.max(m[lo:]) if m.size > lo else 0.0
        for k in range(lo, m.size):
            a, b = max(lo, k - guard_bins), min(m.size, k + guard_bins + 1)
            if m[k] > 0 and m[k] == np.max(m[a:b]) and m[k] >= rel_threshold * top:
                found.append(k)
        found.sort(key=lambda k: -m[k])
        if count is not None:
            found = found[:count]
        return [(float(self.freqs[k]), float(m[k])) for k in found]

    def largest_bins(self, count, include_dc=False):
        """Frequencies of the ``count`` largest bins regardless of shape."""
        lo = 0 if include_dc else 1
        order = np.argsort(self.magnitudes[lo:])[::-1][:count] + lo
        return [float(self.freqs[k]) for k in order]

    def energy(self):
        """``Σ|x|²`` reconstructed from the one-sided bins (Parseval)."""
        w = np.full(self.magnitudes.size, 2.0)
        w[0] = 1.0
        if self.n % 2 == 0:
            w[-1] = 1.0
        return float(np.sum(w * self.magnitudes**2) / self.n)


def spectrum(samples, dt, window="rectangular"):
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise TooFewSamples("spectrum needs at least 2 samples")
    if window != "rectangular":
        raise ValueError("only the rectangular window is supported")
    if not dt > 0:
        raise ValueError("dt must be positive")
    mags = np.abs(np.fft.rfft(x))
    return Spectrum(np.fft.rfftfreq(x.size, dt), mags, x.size, float(dt), window)


def dft_direct(samples, chunk=256):
    """Textbook O(N²) DFT of a real record, one-sided. Reference only."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    k_all = np.arange(n // 2 + 1)
    t = np.arange(n)
    out = np.empty(k_all.size, dtype=complex)
    for s in range(0, k_all.size, chunk):
        k = k_all[s:s + chunk, None]
        out[s:s + chunk] = np.exp(-2j * np.pi * ((k * t) % n) / n) @ x
    return out


# --------------------------------------------------------------------------
# sinusoid fitting and frequency response
# --------------------------------------------------------------------------
def fit_sinusoid(t, x, freq, harmonics=1):
    """Least-squares fit of ``c + Σ a_k cos(kωt) + b_k sin(kωt)``.

    Returns ``(amplitudes, phases, offset)`` for k = 1..harmonics, phases
    referred to ``sin``.
    """
    t = np.asarray(t, dtype=float)
    w = 2.0 * np.pi * freq
    cols = [np.ones_like(t)]
    for k in range(1, harmonics + 1):
        cols += [np.sin(k * w * t), np.cos(k * w * t)]
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), np.asarray(x, float), rcond=None)
    s, c = coef[1::2], coef[2::2]
    return np.hypot(s, c), np.arctan2(c, s), float(coef[0])


def harmonic_content(t, x, f0, n_harmonics=3):
    """Amplitudes of the first ``n_harmonics`` harmonics of ``f0``."""
    amps, _, _ = fit_sinusoid(t, x, f0, n_harmonics)
    return amps


def estimate_frequency(t, x):
    """Mean frequency from interpolated rising crossings of the mean level."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float) - np.mean(x)
    rising = np.flatnonzero((x[:-1] < 0) & (x[1:] >= 0))
    if rising.size < 2:
        raise TooFewSamples("need at least two rising crossings")
    tc = t[rising] - x[rising] * (t[rising + 1] - t[rising]) / (x[rising + 1] - x[rising])
    return float((rising.size - 1) / (tc[-1] - tc[0]))


def frequency_response(runner, freqs, settle_periods=5, measure_periods=5,
                       amplitude=1.0, v_in="v_in", v_out="v_out", settle_time=0.0):
    """Steady-state gain in dB at each frequency.

    ``runner(source, duration)`` must return a Trace holding ``v_in`` and
    ``v_out`` channels. The gain is the ratio of fitted fundamentals over the
    last ``measure_periods`` periods, after at least ``settle_periods``
    periods and ``settle_time`` seconds of settling.
    """
    gains = []
    for f in freqs:
        if not f > 0:
            raise ValueError(f"frequency must be positive, got {f}")
        period = 1.0 / f
        settle = max(settle_periods, math.ceil(settle_time / period))
        tr = runner(Sine(amplitude, f), (settle + measure_periods) * period)
        seg = tr.last(measure_periods * period)
        a_in, _, _ = fit_sinusoid(seg.t, seg[v_in], f)
        a_out, _, _ = fit_sinusoid(seg.t, seg[v_out], f)
        gains.append(20.0 * math.log10(a_out[0] / a_in[0]))
    return np.array(gains)


# --------------------------------------------------------------------------
# sigma-phi locus
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class LocusCheck:
    single_valued: bool
    max_fold_gap: float  # largest σ spread among flux-coincident samples
    phi_at_gap: float


def sigma_phi_locus(trace, phi_eps=1e-3, sigma_eps=1e-2, phi="phi_in", sigma="sigma"):
    """Is σ a function of φ?

    Samples are sorted by φ. Within every φ-window narrower than
    ``phi_eps·range(φ)`` the σ spread must stay below ``sigma_eps·range(σ)``.
    """
    p = np.asarray(trace[phi], dtype=float)
    s = np.asarray(trace[sigma], dtype=float)
    if p.size < MIN_SAMPLES_PER_PERIOD:
        raise TooFewSamples(f"{p.size} samples, need {MIN_SAMPLES_PER_PERIOD}")
    order = np.argsort(p, kind="stable")
    p, s = p[order], s[order]
    width = phi_eps * np.ptp(p)
    lo = 0
    hi_q, lo_q = deque(), deque()  # indices with decreasing / increasing σ
    gap, where = 0.0, float(p[0])
    for i in range(p.size):
        while hi_q and s[hi_q[-1]] <= s[i]:
            hi_q.pop()
        hi_q.append(i)
        while lo_q and s[lo_q[-1]] >= s[i]:
            lo_q.pop()
        lo_q.append(i)
        while p[i] - p[lo] >= width and lo < i:
            lo += 1
            if hi_q[0] < lo:
                hi_q.popleft()
            if lo_q[0] < lo:
                lo_q.popleft()
        spread = s[hi_q[0]] - s[lo_q[0]]
        if spread > gap:
            gap, where = float(spread), float(p[i])
    limit = sigma_eps * np.ptp(s)
    return LocusCheck(bool(gap <= limit), gap, where)


# --------------------------------------------------------------------------
# attractors
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class AttractorSummary:
    terminal_point: tuple
    converged: bool
    dominant_periods: tuple
    shrink_ratio: float

    def to_dict(self):
        d = asdict(self)
        d["terminal_point"] = list(self.terminal_point)
        d["dominant_periods"] = list(self.dominant_periods)
        return d


def attractor_summary(trace, channels, window_fraction=0.1, shrink_tol=0.01,
                      peak_threshold=0.25, guard_bins=3):
    """Convergence of a channel pair plus the dominant periods of the first.

    Converged means the bounding box of the trailing window is smaller than
    ``shrink_tol`` of the leading window's box along both axes.
    """
    a, b = (np.asarray(trace[c], dtype=float) for c in channels)
    n = a.size
    if n < MIN_SAMPLES_PER_PERIOD:
        raise TooFewSamples(f"{n} samples, need {MIN_SAMPLES_PER_PERIOD}")
    w = max(int(window_fraction * n), 2)
    ratios = []
    for x in (a, b):
        first = np.ptp(x[:w])
        if first > 0:
            ratios.append(np.ptp(x[-w:]) / first)
    shrink = float(max(ratios)) if ratios else 0.0
    spec = spectrum(a - a.mean(), trace.dt)
    peaks = spec.peaks(rel_threshold=peak_threshold, guard_bins=guard_bins)
    periods = tuple(sorted(1.0 / f for f, _ in peaks))
    return AttractorSummary(
        terminal_point=(float(a[-1]), float(b[-1])),
        converged=shrink < shrink_tol,
        dominant_periods=periods,
        shrink_ratio=shrink,
    )
