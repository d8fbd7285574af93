import json
import os

import numpy as np
import pytest

from memsim.scenarios import (OverrideError, UnknownScenario, artifact_files, get, names,
                              run_scenario, write_artifacts, write_tree)
from memsim.scenarios.oscillators import OscillatorParams, lc_system, lc_initial
from memsim.scenarios.rc import REFERENCE_TABLE, RcParams, pole_frequency
from memsim.trace import Trace

EXPECTED = {"am_chain", "chaotic", "lc_oscillator", "parallel", "pinch_1khz",
            "pulse_nonvolatility", "qv_sweep", "rc_lpf", "sigma_phi_locus"}


def test_registry():
    assert set(names()) == EXPECTED
    assert get("qv_sweep").summary
    with pytest.raises(UnknownScenario):
        get("nope")


def test_override_coercion():
    p = get("pulse_nonvolatility").params().with_overrides(
        {"n_pulses": 3.0, "topology": "incremental", "amplitude": 0.2})
    assert (p.n_pulses, p.topology, p.amplitude) == (3, "incremental", 0.2)
    with pytest.raises(OverrideError):
        get("pulse_nonvolatility").params().with_overrides({"n_pulses": 2.5})
    with pytest.raises(OverrideError):
        get("pulse_nonvolatility").params().with_overrides({"bogus": 1})
    with pytest.raises(OverrideError):
        get("pulse_nonvolatility").params().with_overrides({"amplitude": "big"})
    q = get("qv_sweep").params().with_overrides({"points": (1.0, 2.0), "hold": "none"})
    assert q.points == (1.0, 2.0) and q.hold is None
    r = get("rc_lpf").params().with_overrides({"linear": "yes"})
    assert r.linear is True


@pytest.mark.parametrize("topology, direction", [("decremental", -1), ("incremental", 1)])
def test_pulse_retention(topology, direction):
    m = run_scenario("pulse_nonvolatility", {"topology": topology}).metrics
    assert m["off_drift"] == 0.0
    assert m["on_monotone"] and m["levels_strictly_monotone"]
    assert m["pulses"] == 6
    assert direction * (m["c_m_final"] - m["c_m_initial"]) > 0


def test_zero_pulse_leaves_capacitance_constant():
    m = run_scenario("pulse_nonvolatility", {"amplitude": 0.0}).metrics
    assert m["c_m_constant"]


def test_qv_sweep_axes():
    m = run_scenario("qv_sweep", {"axis": "bias"}).metrics
    assert m["all_pinched"] and m["area_strictly_increasing"]
    with pytest.raises(ValueError):
        run_scenario("qv_sweep", {"axis": "bias", "hold": "cf"})


def test_qv_sweep_trace_overlay():
    r = run_scenario("qv_sweep", {"axis": "frequency", "hold": "c", "points": (1e3, 2e3)})
    assert r.trace.names == ("v_in_0", "q_0", "v_in_1", "q_1")
    assert r.trace.t[0] == 0.0 and r.trace.t[-1] < 1.0
    assert [row["point"] for row in r.sweep] == [1e3, 2e3]


def test_sigma_phi_locus():
    m = run_scenario("sigma_phi_locus").metrics
    assert m["single_valued"]


def test_parallel():
    m = run_scenario("parallel").metrics
    assert m["q_equ_max_rel_error"] < 1e-9
    assert m["area_ratio"] == pytest.approx(2.0, abs=0.1)


def test_lc_system_conserves_charge_relation():
    p = OscillatorParams(k=0.0)
    sysm = lc_system(p)
    dy = sysm.derivative(0.0, np.array(lc_initial(p)))
    assert dy[0] == pytest.approx(p.v0)
    assert dy[2] == pytest.approx(p.v0 / p.l)


def test_lc_oscillator_controls():
    lin = run_scenario("lc_oscillator", {"k": 0.0}).metrics
    assert lin["quadrature_residual"] < 1e-4
    assert lin["oracle_rms_rel"] < 1e-6
    non = run_scenario("lc_oscillator").metrics
    assert non["quadrature_residual"] > 1e-3
    assert non["second_harmonic_ratio"] > 0.01


def test_lc_oscillator_rejects_no_energy():
    with pytest.raises(ValueError):
        OscillatorParams(v0=0.0, i0=0.0)


def test_chaotic_converges():
    m = run_scenario("chaotic").metrics
    assert m["sigma_il3"]["converged"] and m["sigma_il4"]["converged"]
    assert m["natural_period"] > 0


def test_chaotic_less_damping_still_bounded():
    m = run_scenario("chaotic", {"dissipation": 0.1}).metrics
    assert all(np.isfinite(m["sigma_il3"]["terminal_point"]))


def test_rc_lpf():
    r = run_scenario("rc_lpf")
    m = r.metrics
    assert m["gain_low_db"] == pytest.approx(0.0, abs=0.1)
    assert m["slope_db_per_decade_high"] == pytest.approx(-20.0, abs=1.0)
    assert m["reference_trend"] == "rising" and m["simulated_trend"] == "falling"
    assert pole_frequency(RcParams()) == pytest.approx(79.6e3, rel=1e-3)
    assert len(REFERENCE_TABLE) == 11


def test_am_chain():
    m = run_scenario("am_chain").metrics
    assert sorted(m["top3_bins_hz"]) == pytest.approx([1.94e6, 2.0e6, 2.06e6])
    assert m["correlation"] > 0.95
    assert m["control"]["suppression_db"] >= 30


def test_artifacts_written_atomically(tmp_path):
    r = run_scenario("pinch_1khz")
    path = write_artifacts(r, tmp_path)
    assert sorted(os.listdir(path)) == ["metrics.json", "trace.csv"]
    meta = json.loads(open(os.path.join(path, "metrics.json")).read())
    assert meta["scenario"] == "pinch_1khz"
    assert meta["params"]["topology"] == "decremental"
    assert Trace.read_csv(os.path.join(path, "trace.csv")).equals(r.trace)
    # rewriting replaces the directory and leaves no temporaries behind
    write_artifacts(r, tmp_path)
    assert os.listdir(tmp_path) == ["pinch_1khz"]


def test_write_tree_failure_leaves_nothing(tmp_path):
    class Boom(str):
        pass

    with pytest.raises(TypeError):
        write_tree(tmp_path, "x", {"a.txt": "ok", "b.txt": 5})
    assert os.listdir(tmp_path) == []


def test_json_format():
    files = artifact_files(run_scenario("qv_sweep", {"axis": "bias"}), fmt="json")
    assert set(files) == {"metrics.json", "trace.json", "sweep.json"}
    json.loads(files["sweep.json"])
