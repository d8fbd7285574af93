import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from memsim.errors import Diverged
from memsim.solver import SolveConfig, StateSystem, integrate, reference_integrate


def oscillator():
    return StateSystem(lambda t, y: np.array([y[1], -y[0]]), ("x", "v"),
                       {"energy": lambda t, Y: 0.5 * (Y[:, 0] ** 2 + Y[:, 1] ** 2)})


def final_error(n):
    tr = integrate(oscillator(), [1.0, 0.0], SolveConfig(0.0, 10.0, 10.0 / n))
    return math.hypot(tr["x"][-1] - math.cos(10.0), tr["v"][-1] + math.sin(10.0))


@pytest.mark.parametrize("n", [50, 100, 200])
def test_fourth_order_on_oscillator(n):
    assert 12 <= final_error(n) / final_error(2 * n) <= 20


def test_exponential_decay():
    sys = StateSystem(lambda t, y: -y, ("y",))
    tr = integrate(sys, [1.0], SolveConfig(0.0, 1.0, 1e-3))
    assert tr["y"][-1] == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_time_dependent_forcing():
    sys = StateSystem(lambda t, y: np.array([math.cos(t)]), ("y",))
    tr = integrate(sys, [0.0], SolveConfig(0.0, 2.0, 1e-2))
    assert np.allclose(tr["y"], np.sin(tr.t), atol=1e-10)


def test_stride_and_taps():
    cfg = SolveConfig(0.0, 1.0, 0.01, stride=10)
    tr = integrate(oscillator(), [1.0, 0.0], cfg)
    assert len(tr) == 11
    assert tr.t[-1] == pytest.approx(1.0)
    assert np.allclose(tr["energy"], 0.5, atol=1e-9)


def test_initial_state_recorded():
    tr = integrate(oscillator(), [0.3, 0.2], SolveConfig(0.0, 0.1, 0.01))
    assert (tr["x"][0], tr["v"][0]) == (0.3, 0.2)


def test_diverged_raises_before_nan():
    sys = StateSystem(lambda t, y: y * y, ("y",))
    with pytest.raises(Diverged) as e:
        integrate(sys, [1.0], SolveConfig(0.0, 2.0, 1e-3))
    assert e.value.index == 0
    assert 0.9 < e.value.t < 1.01


def test_nan_derivative_is_diverged():
    sys = StateSystem(lambda t, y: np.array([np.nan]), ("y",))
    with pytest.raises(Diverged):
        integrate(sys, [0.0], SolveConfig(0.0, 1.0, 0.1))


@pytest.mark.parametrize("kw", [dict(t1=0.0), dict(dt=0.0), dict(dt=-1.0), dict(stride=0),
                                dict(stride=1.5)])
def test_config_rejects(kw):
    base = dict(t0=0.0, t1=1.0, dt=0.1)
    base.update(kw)
    with pytest.raises(ValueError):
        SolveConfig(**base)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        integrate(oscillator(), [1.0], SolveConfig(0.0, 1.0, 0.1))


def test_reference_shares_grid():
    cfg = SolveConfig(0.0, 1.0, 0.05)
    a = integrate(oscillator(), [1.0, 0.0], cfg)
    b = reference_integrate(oscillator(), [1.0, 0.0], cfg)
    assert np.allclose(a.t, b.t)
    assert np.max(np.abs(b["x"] - np.cos(b.t))) < 1e-3 * np.max(np.abs(a["x"] - np.cos(a.t))) + 1e-14


@given(st.floats(0.01, 5.0), st.integers(20, 400))
@settings(max_examples=50, deadline=None)
def test_step_error_bounded(omega, n):
    # local truncation of RK4 on a linear oscillator: |error| <= C (ω dt)^4 · ω t
    sys = StateSystem(lambda t, y: np.array([y[1], -omega * omega * y[0]]), ("x", "v"))
    t1 = 2 * math.pi / omega
    dt = t1 / n
    tr = integrate(sys, [1.0, 0.0], SolveConfig(0.0, t1, dt))
    err = abs(tr["x"][-1] - math.cos(omega * tr.t[-1]))
    assert err <= (omega * dt) ** 4 * (omega * t1) / 60 + 1e-12
