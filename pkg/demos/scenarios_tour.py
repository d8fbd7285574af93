"""Run a few registered scenarios and print their headline metrics."""
from memsim.scenarios import run_scenario

r = run_scenario("parallel")
print("parallel: area ratio", round(r.metrics["area_ratio"], 4))

r = run_scenario("pulse_nonvolatility", {"topology": "incremental"})
print("pulses: OFF drift", r.metrics["off_drift"], "levels",
      [f"{c * 1e12:.0f}p" for c in r.metrics["pulse_levels"]])

r = run_scenario("lc_oscillator")
print("lc oscillator: H2/H1", round(r.metrics["second_harmonic_ratio"], 4))
