import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from memsim.analysis import (attractor_summary, dft_direct, estimate_frequency, fit_sinusoid,
                             frequency_response, harmonic_content, linearity_residual,
                             lobe_areas, loop_metrics, loop_metrics_arrays, sigma_phi_locus,
                             spectrum)
from memsim.errors import TooFewSamples
from memsim.trace import Trace, running_integral

N = 4000


def synthetic(n=N, shift=0):
    t = 2 * np.pi * (np.arange(n) + shift) / n
    v = np.sin(t)
    return v, v * (1 + 0.3 * np.cos(t))


def quad_lobe_area():
    # area enclosed by v = sin t, q = sin t (1 + 0.3 cos t) over t ∈ [0, π]:
    # ∮ v dq evaluated by dense trapezoid quadrature
    t = np.linspace(0, np.pi, 200001)
    v = np.sin(t)
    dq = np.gradient(v * (1 + 0.3 * np.cos(t)), t)
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    return abs(trapezoid(v * dq, t))


def test_synthetic_loop_oracle():
    assert quad_lobe_area() == pytest.approx(0.2, rel=1e-6)
    m = loop_metrics_arrays(*synthetic())
    assert m.lobe_count == 2
    assert m.lobe_areas == pytest.approx((0.2, 0.2), rel=1e-5)
    assert m.pinch_metric < 1e-12
    assert 0 < m.linearity_residual < 0.1


def test_linear_capacitor_has_no_lobes():
    t = 2 * np.pi * np.arange(N) / N
    m = loop_metrics_arrays(np.sin(t), 3e-9 * np.sin(t))
    assert m.lobe_count == 0
    assert m.linearity_residual == pytest.approx(0.0, abs=1e-12)
    assert m.pinch_metric < 1e-12


def test_unpinched_ellipse():
    t = 2 * np.pi * np.arange(N) / N
    m = loop_metrics_arrays(np.sin(t), np.cos(t))
    assert m.pinch_metric == pytest.approx(1.0, rel=1e-6)
    assert m.lobe_count == 1 or m.total_area == pytest.approx(np.pi, rel=1e-4)


def test_window_method():
    v, q = synthetic()
    m = loop_metrics_arrays(v, q, method="window")
    assert m.pinch_metric < 0.02
    with pytest.raises(ValueError):
        loop_metrics_arrays(v, q, method="other")


def test_too_few_samples():
    v, q = synthetic(32)
    with pytest.raises(TooFewSamples):
        loop_metrics_arrays(v, q)
    tr = Trace(np.arange(32) * 1e-3, {"v_in": v, "q": q})
    with pytest.raises(TooFewSamples):
        loop_metrics(tr, 32e-3)


def test_loop_metrics_uses_last_period():
    v, q = synthetic()
    junk = np.linspace(5, 6, 500)
    tr = Trace(np.arange(N + 500) * 1e-6, {"v_in": np.r_[junk, v], "q": np.r_[junk, q]})
    m = loop_metrics(tr, N * 1e-6)
    assert m.lobe_areas == pytest.approx((0.2, 0.2), rel=1e-5)


@given(st.integers(0, N - 1))
@settings(max_examples=40, deadline=None)
def test_time_translation_invariance(k):
    v, q = synthetic()
    a = loop_metrics_arrays(v, q)
    b = loop_metrics_arrays(np.roll(v, k), np.roll(q, k))
    assert sorted(b.lobe_areas) == pytest.approx(sorted(a.lobe_areas), rel=1e-3)
    assert b.pinch_metric < 1e-6
    assert b.linearity_residual == pytest.approx(a.linearity_residual, rel=1e-9)


@given(st.floats(0.01, 100.0))
@settings(max_examples=40, deadline=None)
def test_area_scales_with_square(s):
    v, q = synthetic()
    a = loop_metrics_arrays(v, q)
    b = loop_metrics_arrays(s * v, s * q)
    assert b.total_area == pytest.approx(s * s * a.total_area, rel=1e-9)
    assert b.pinch_metric == pytest.approx(a.pinch_metric, abs=1e-12)


def test_lobe_areas_degenerate():
    assert lobe_areas(np.ones(10), np.arange(10.0)) == pytest.approx((0.0,))


def test_linearity_residual_constant():
    assert linearity_residual(np.ones(5), np.arange(5.0)) == 0.0


def test_metrics_to_dict():
    d = loop_metrics_arrays(*synthetic()).to_dict()
    assert set(d) == {"pinch_metric", "lobe_areas", "linearity_residual", "crossing_count",
                      "lobe_count", "total_area"}
    assert "_area_floor" not in d


# -- spectra --------------------------------------------------------------------
def test_bin_aligned_sine_peak():
    n, dt = 1024, 1e-3
    t = dt * np.arange(n)
    f = 50 / (n * dt)
    s = spectrum(2.0 * np.sin(2 * np.pi * f * t), dt)
    assert s.resolution == pytest.approx(1 / (n * dt))
    assert s.peaks(1)[0][0] == pytest.approx(f)
    assert s.magnitude_at(f) == pytest.approx(n, rel=1e-9)


def test_three_tones_largest_bins():
    n, dt = 4096, 1e-6
    t = dt * np.arange(n)
    res = 1 / (n * dt)
    x = np.sin(2 * np.pi * 100 * res * t) + 0.5 * np.sin(2 * np.pi * 90 * res * t) \
        + 0.4 * np.sin(2 * np.pi * 110 * res * t)
    s = spectrum(x, dt)
    assert s.largest_bins(3) == pytest.approx([100 * res, 90 * res, 110 * res])
    assert [f for f, _ in s.peaks(3, guard_bins=2)] == pytest.approx([100 * res, 90 * res, 110 * res])
    assert s.db()[s.bin_of(100 * res)] == pytest.approx(0.0)


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=300))
@settings(max_examples=100, deadline=None)
def test_parseval(x):
    x = np.array(x)
    assert spectrum(x, 1.0).energy() == pytest.approx(np.sum(x * x), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("n", [64, 255, 1000])
def test_fft_matches_direct_dft(n):
    rng = np.random.default_rng(n)
    x = rng.normal(size=n)
    assert np.allclose(spectrum(x, 1.0).magnitudes, np.abs(dft_direct(x)), atol=1e-9)


def test_spectrum_rejects():
    with pytest.raises(TooFewSamples):
        spectrum([1.0], 1.0)
    with pytest.raises(ValueError):
        spectrum([1.0, 2.0], 1.0, window="hann")
    with pytest.raises(ValueError):
        spectrum([1.0, 2.0], 0.0)


# -- fitting -------------------------------------------------------------------
def test_fit_sinusoid_and_harmonics():
    t = np.linspace(0, 0.1, 5000, endpoint=False)
    x = 0.2 + 1.5 * np.sin(2 * np.pi * 50 * t + 0.4) + 0.1 * np.sin(2 * np.pi * 100 * t)
    amps, phases, off = fit_sinusoid(t, x, 50.0, harmonics=2)
    assert amps == pytest.approx([1.5, 0.1], rel=1e-9)
    assert phases[0] == pytest.approx(0.4)
    assert off == pytest.approx(0.2)
    assert harmonic_content(t, x, 50.0, 3) == pytest.approx([1.5, 0.1, 0.0], abs=1e-9)


def test_estimate_frequency():
    t = np.linspace(0, 1, 100001)
    assert estimate_frequency(t, np.sin(2 * np.pi * 37.5 * t + 1.0)) == pytest.approx(37.5, rel=1e-6)
    with pytest.raises(TooFewSamples):
        estimate_frequency(t[:10], t[:10])


def test_frequency_response_first_order_lowpass():
    tau = 1e-3

    def runner(src, duration):
        dt = min(src.period / 400, tau / 20)
        n = int(round(duration / dt))
        t = dt * np.arange(n + 1)
        v = src(t)
        y = np.zeros_like(v)
        a = math.exp(-dt / tau)
        # exact zero-order-hold response, adequate at 400 points per period
        for i in range(1, v.size):
            y[i] = a * y[i - 1] + (1 - a) * v[i - 1]
        return Trace(t, {"v_in": v, "v_out": y})

    fc = 1 / (2 * math.pi * tau)
    g = frequency_response(runner, [fc / 10, fc, 10 * fc], settle_time=5 * tau)
    expected = [-10 * math.log10(1 + r * r) for r in (0.1, 1.0, 10.0)]
    assert g == pytest.approx(expected, abs=0.05)


# -- σ-φ locus -------------------------------------------------------------------
def test_locus_single_valued_for_function():
    phi = np.sin(np.linspace(0, 4 * np.pi, 2000))
    sig = phi**3 + 0.2 * phi
    check = sigma_phi_locus(Trace(np.arange(2000.0), {"phi_in": phi, "sigma": sig}))
    assert check.single_valued


def test_locus_detects_fold():
    t = np.linspace(0, 2 * np.pi, 2000)
    check = sigma_phi_locus(Trace(t, {"phi_in": np.cos(t), "sigma": np.sin(t)}))
    assert not check.single_valued
    assert check.max_fold_gap > 1.0


def test_locus_of_simulated_memcap():
    from memsim.memcap import MemcapParams, simulate
    from memsim.waveforms import Sine
    p = MemcapParams.from_biases(0.6, 0.64, 0.6, c_int=240e-9, c_out=500e-12,
                                 topology="decremental")
    tr = simulate(p, Sine(0.35, 1e3), 2e-3)
    assert sigma_phi_locus(tr).single_valued


# -- attractors --------------------------------------------------------------------
def test_attractor_damped_oscillator():
    t = np.linspace(0, 50, 20000)
    x = np.exp(-0.3 * t) * np.cos(2 * np.pi * t)
    y = np.exp(-0.3 * t) * np.sin(2 * np.pi * t)
    s = attractor_summary(Trace(t, {"a": x, "b": y}), ("a", "b"))
    assert s.converged
    assert s.terminal_point == pytest.approx((0.0, 0.0), abs=1e-5)
    assert any(abs(p - 1.0) < 0.1 for p in s.dominant_periods)
    assert s.to_dict()["converged"] is True


def test_attractor_limit_cycle_does_not_converge():
    t = np.linspace(0, 50, 20000)
    s = attractor_summary(Trace(t, {"a": np.cos(t), "b": np.sin(t)}), ("a", "b"))
    assert not s.converged
