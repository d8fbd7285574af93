import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from memsim.errors import DenominatorNearZero, Gm2Collapse
from memsim.memcap import (MemcapParams, MemcapState, NonIdealNetwork, Topology,
                           extract_memcapacitance_from_pulse, initial_state,
                           memcapacitance_ideal, memcapacitance_nonideal, memory_rate,
                           nonideal_terms, on_intervals, parallel_compose, simulate,
                           sinusoid_flux, step_structural)
from memsim.ota import OtaParasitics, OtaParams, gain_coefficient
from memsim.solver import reference_integrate
from memsim.waveforms import Constant, Pulse, Sine


def dec(**kw):
    base = dict(vb1=0.6, vb2=0.64, vb3=0.6, c_int=240e-9, c_out=500e-12, topology="decremental")
    base.update(kw)
    return MemcapParams.from_biases(**base)


def test_topology_parse():
    assert Topology.parse("inc") is Topology.INCREMENTAL
    assert Topology.parse("Decremental") is Topology.DECREMENTAL
    assert Topology.INCREMENTAL.sign == 1 and Topology.DECREMENTAL.sign == -1
    assert Topology.INCREMENTAL.wiring != Topology.DECREMENTAL.wiring
    with pytest.raises(ValueError):
        Topology.parse("sideways")


@pytest.mark.parametrize("kw", [dict(c_int=0.0), dict(c_out=-1e-12), dict(vb2=-0.3),
                                dict(sign_convention="other")])
def test_params_invariants(kw):
    with pytest.raises(ValueError):
        dec(**kw)


def test_operating_point_check():
    with pytest.raises(ValueError):
        dec(vb1=-0.5).check_operating_point()


def test_initial_capacitance():
    p = dec()
    c0 = 500e-12 * (1 - 0.9 / 0.94)
    assert memcapacitance_ideal(p, 0.0) == pytest.approx(c0, rel=1e-12)
    assert p.capacitance_at(p.vb2_init) == pytest.approx(c0, rel=1e-12)
    assert initial_state(p, 1.0).q == pytest.approx(c0)


def test_closed_form_direction():
    phi = np.array([-1e-5, 0.0, 1e-5])
    inc = memcapacitance_ideal(dec(topology="incremental"), phi)
    de = memcapacitance_ideal(dec(), phi)
    assert np.all(np.diff(inc) > 0)
    assert np.all(np.diff(de) < 0)


def test_closed_form_matches_state_formula():
    # with G_m2 frozen, the state after flux φ is v_b2 = V_B2 + s·X·φ
    p = dec(topology="incremental")
    phi = np.linspace(-2e-5, 2e-5, 7)
    vb2 = p.vb2_init + p.flux_coupling() * phi
    assert np.allclose(memcapacitance_ideal(p, phi), p.capacitance_at(vb2), rtol=1e-12)


def test_as_written_convention_differs():
    a = dec(sign_convention="as-written")
    b = dec()
    assert memcapacitance_ideal(a, 0.0) != memcapacitance_ideal(b, 0.0)


def test_singular_flux_raises():
    p = dec()
    # bracket denominator vanishes where v_b2 reaches OTA2 cut-off
    phi_sing = -p.headroom / (p.topology.sign * p.flux_coupling())
    with pytest.raises(DenominatorNearZero):
        memcapacitance_ideal(p, phi_sing)
    assert issubclass(DenominatorNearZero, ArithmeticError)


def test_sinusoid_flux():
    t = np.linspace(0, 1e-3, 11)
    w = 2 * math.pi * 1e3
    assert np.allclose(sinusoid_flux(0.35, w, t), 0.35 / w * (1 - np.cos(w * t)))
    with pytest.raises(ValueError):
        sinusoid_flux(1.0, 0.0, t)


# -- structural ---------------------------------------------------------------
def test_structural_matches_closed_form_small_signal():
    p = dec()
    tr = simulate(p, Sine(0.05, 1e3), 1e-3)
    qc = memcapacitance_ideal(p, tr["phi_in"]) * tr["v_in"]
    assert np.sqrt(np.mean((tr["q"] - qc) ** 2)) / np.max(np.abs(tr["q"])) < 0.05


def test_self_convergence_against_reference():
    p = dec()
    src = Sine(0.35, 1e3)
    a = simulate(p, src, 1e-3, dt=1e-3 / 500)
    b = simulate(p, src, 1e-3, dt=1e-3 / 500, integrator=reference_integrate)
    assert np.max(np.abs(a["q"] - b["q"])) / np.max(np.abs(b["q"])) < 1e-3


def test_current_is_charge_derivative():
    p = dec()
    tr = simulate(p, Sine(0.35, 1e3), 1e-3)
    dq = np.gradient(tr["q"], tr.dt)
    scale = np.max(np.abs(tr["i_in"]))
    assert np.max(np.abs(dq[1:-1] - tr["i_in"][1:-1])) < 1e-3 * scale


def test_flux_and_sigma_channels():
    p = dec()
    tr = simulate(p, Sine(0.35, 1e3), 1e-3)
    w = 2 * math.pi * 1e3
    assert np.allclose(tr["phi_in"], sinusoid_flux(0.35, w, tr.t), atol=1e-9)
    assert tr["sigma"][0] == 0.0


def test_step_structural_agrees_with_simulate():
    p = dec()
    src = Sine(0.35, 1e3)
    dt = 1e-3 / 2000
    tr = simulate(p, src, 1e-4, dt=dt)
    s = MemcapState(p.vb2_init)
    for i in range(len(tr) - 1):
        s, _ = step_structural(p, s, float(src(i * dt)), dt, float(src((i + 1) * dt)))
    # the step interpolates the drive linearly, so it only tracks the exact source closely
    assert s.v_b2 == pytest.approx(tr["v_b2"][-1], abs=1e-6)
    assert s.phi == pytest.approx(tr["phi_in"][-1], rel=1e-9)


def test_gm2_collapse_raises():
    # a sustained decremental drive exhausts OTA2's headroom in a few microseconds
    p = dec(c_int=1e-9)
    with pytest.raises(Gm2Collapse):
        simulate(p, Constant(0.35), 1e-3, dt=1e-7)
    with pytest.raises(Gm2Collapse):
        memory_rate(p, p.ota2.v_ss + 2 * p.ota2.v_th, 0.1)


def test_dc_needs_dt():
    with pytest.raises(ValueError):
        simulate(dec(), Constant(0.1), 1e-3)


def test_pulse_off_intervals_hold_state():
    p = dec(topology="incremental")
    tr = simulate(p, Pulse(0.35, 1e-3, 0.5e-3, rise=10e-6, fall=10e-6), 3e-3)
    off = on_intervals(tr["v_in"] == 0.0)
    assert len(off) >= 2
    for a, b in off:
        assert np.ptp(tr["v_b2"][a:b]) == 0.0


def test_extract_from_pulse():
    p = dec(topology="incremental")
    src = Pulse(0.35, 1e-3, 0.5e-3, rise=10e-6, fall=10e-6)
    tr = simulate(p, src, 2e-3)
    ext = extract_memcapacitance_from_pulse(tr, 0.35)
    on = tr["v_in"] >= 0.175
    assert np.allclose(ext[on], tr["c_m"][on], rtol=1e-12)
    with pytest.raises(ValueError):
        extract_memcapacitance_from_pulse(tr, 0.0)
    with pytest.raises(ValueError):
        extract_memcapacitance_from_pulse(tr, 100.0)


def test_on_intervals():
    assert on_intervals([0, 1, 1, 0, 1]) == [(1, 3), (4, 5)]
    assert on_intervals([]) == []


def test_parallel_compose_sums_charges():
    src = Sine(0.35, 1e3)
    a = simulate(dec(), src, 1e-3)
    b = simulate(dec(vb1=0.7), src, 1e-3)
    both = parallel_compose([a, b])
    assert np.array_equal(both["q"], a["q"] + b["q"])
    assert np.array_equal(both["v_in"], a["v_in"])
    with pytest.raises(ValueError):
        parallel_compose([a, simulate(dec(), Sine(0.2, 1e3), 1e-3)])
    with pytest.raises(ValueError):
        parallel_compose([])


# -- non-ideal ----------------------------------------------------------------
@given(st.floats(-3e-5, 3e-5), st.floats(1.0, 1e9))
@settings(max_examples=200)
def test_ideal_limit_is_bit_exact(phi, omega):
    p = dec()
    net = NonIdealNetwork.ideal(p)
    assert memcapacitance_nonideal(p, net, 1.0, phi, omega) == 1j * omega * memcapacitance_ideal(p, phi)


def test_ideal_network_factors():
    p = dec()
    net = NonIdealNetwork.ideal(p)
    assert net.beta1(p, 1e6) == 1.0
    assert net.current_divider(1e6) == 1.0
    leak, _ = nonideal_terms(p, net, 1.0, 0.0, 1e6)
    assert leak == 0.0


def test_from_parasitics():
    p = dec()
    net = NonIdealNetwork.from_parasitics(p, OtaParasitics.typical(), r_s=50.0)
    assert net.r01 == 1e6
    assert net.c_equ == pytest.approx(240e-9 + 100e-15)
    assert net.r02 == pytest.approx(1e6)
    assert net.c02 == pytest.approx(200e-15)
    assert math.isinf(net.r03)
    assert net.r_s == 50.0


@pytest.mark.parametrize("f", [1e3, 8e6])
def test_typical_parasitics_negligible(f):
    p = dec()
    w = 2 * math.pi * f
    net = NonIdealNetwork.from_parasitics(p)
    g = gain_coefficient(OtaParams(), w)
    for phi in np.linspace(0, 2 * 0.35 / w, 9):
        y = memcapacitance_nonideal(p, net, g, phi, w)
        ideal = 1j * w * memcapacitance_ideal(p, phi)
        assert abs(y / ideal - 1) < 0.05


def test_source_resistance_loading_scales_with_frequency():
    p = dec()
    net = NonIdealNetwork.from_parasitics(p, r_s=50.0)
    low = abs(net.beta1(p, 2 * math.pi * 1e3) - 1)
    high = abs(net.beta1(p, 2 * math.pi * 8e6) - 1)
    assert low < 1e-4
    # about R_s·ω·C_m0 with C_m0 ≈ 21 pF; the node-2 admittance shifts it slightly
    assert high == pytest.approx(50 * 2 * math.pi * 8e6 * p.capacitance_at(p.vb2_init), rel=0.15)
