import json

import numpy as np
import pytest

from memsim.errors import MemsimError
from memsim.memcap import MemcapParams
from memsim.montecarlo import (DEFAULT_SEED, REFERENCE_SIGMA_K, REFERENCE_SIGMA_VTH,
                               DeviationSpec, Geometry, rng_for, run_mc, sample_params,
                               worker_count)
from memsim.scenarios import UnknownScenario


def nominal():
    return MemcapParams.from_biases(0.6, 0.64, 0.6, c_int=240e-9, c_out=500e-12,
                                    topology="decremental")


def test_rng_streams_are_keyed():
    a = rng_for(1, 0).normal(size=4)
    assert np.array_equal(a, rng_for(1, 0).normal(size=4))
    assert not np.array_equal(a, rng_for(1, 1).normal(size=4))
    assert not np.array_equal(a, rng_for(2, 0).normal(size=4))


def test_zero_deviation_is_identity():
    p = nominal()
    assert sample_params(p, DeviationSpec.zero(), 5, 3) == p


def test_sample_is_deterministic_and_perturbs():
    p = nominal()
    a = sample_params(p, DeviationSpec.TABLE4, 9, 4)
    assert a == sample_params(p, DeviationSpec.TABLE4, 9, 4)
    assert a != p
    # process part shared, mismatch part per OTA: thresholds differ but stay close
    vth = [a.ota1.v_th, a.ota2.v_th, a.ota3.v_th]
    assert len(set(vth)) == 3
    assert np.ptp(vth) < 0.05


def test_table4_rows():
    t = DeviationSpec.TABLE4
    assert t.sigma("v_th") == (0.04, 0.004)
    assert t.combined("v_th") == pytest.approx(0.0402, rel=1e-3)
    assert set(t.rows) >= set(DeviationSpec.MAPPED)
    with pytest.raises(ValueError):
        DeviationSpec({"v_th": (-1.0, 0.0)})


def test_geometry_sets_k_scale():
    # widening the device by 1% raises k by ~1%
    p = nominal()
    dev = DeviationSpec({"w": (0.12e-6, 0.0)})
    ratios = [sample_params(p, dev, 1, i).ota1.k / p.ota1.k for i in range(200)]
    assert np.std(ratios) == pytest.approx(0.01, rel=0.15)
    assert Geometry().w == 12e-6


def test_invalid_draws_exhaust_resamples():
    # OTA1 is cut off at the nominal bias, so every redraw is rejected
    bad = MemcapParams.from_biases(-0.5, 0.64, 0.6, topology="decremental")
    with pytest.raises(MemsimError):
        sample_params(bad, DeviationSpec.zero(), 1, 0)


def test_run_mc_reproducible_and_worker_independent():
    a = run_mc("pinch_1khz", 6, seed=3, workers=1)
    b = run_mc("pinch_1khz", 6, seed=3, workers=2)
    assert a.to_json() == b.to_json()
    assert run_mc("pinch_1khz", 6, seed=4, workers=1).to_json() != a.to_json()


def test_report_contents():
    r = run_mc("pinch_1khz", 8, workers=1)
    d = json.loads(r.to_json())
    assert d["seed"] == DEFAULT_SEED and d["n"] == 8
    assert "Philox" in d["rng"]
    assert d["reference_sigma"] == {"v_th": REFERENCE_SIGMA_VTH, "k": REFERENCE_SIGMA_K}
    assert sum(d["histograms"]["v_th"]["counts"]) == 8
    assert r.failures == []
    assert r.pinch_fraction() == 1.0
    csv = r.histogram_csv().splitlines()
    assert csv[0] == "parameter,bin_lo,bin_hi,count"
    assert len(csv) == 1 + 2 * 20


def test_run_mc_rejects():
    with pytest.raises(ValueError):
        run_mc("pinch_1khz", 0)
    with pytest.raises(UnknownScenario):
        run_mc("nope", 1, workers=1)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("MEMSIM_THREADS", "3")
    assert worker_count(10) == 3
    assert worker_count(2) == 2
    monkeypatch.setenv("MEMSIM_THREADS", "junk")
    assert worker_count(1) == 1
