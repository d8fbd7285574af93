"""Tour of the memcapacitor model: one loop, its metrics and the bias knob.

Larger bias widens the loop; the emulator is active, so C_m can swing
negative once G_m3 outgrows G_m2. Run with ``python3 demos/loop_tour.py``.
"""
from memsim.analysis import loop_metrics
from memsim.memcap import MemcapParams, simulate
from memsim.waveforms import Sine

f = 1e3
for vb in (0.4, 0.6, 0.8):
    p = MemcapParams.from_biases(vb, 0.64, vb, c_int=240e-9, c_out=500e-12,
                                 topology="incremental")
    tr = simulate(p, Sine(0.35, f), 1 / f)
    m = loop_metrics(tr, 1 / f)
    print(f"V_B = {vb:.1f} V  C_m range {tr['c_m'].min() * 1e12:6.1f}-"
          f"{tr['c_m'].max() * 1e12:6.1f} pF  area {m.total_area:.3e} C*V  "
          f"pinch {m.pinch_metric:.1e}")
