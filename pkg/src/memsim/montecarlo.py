"""Process and mismatch sampling with seeded, replayable batches.

Random numbers come from numpy's Philox counter-based generator keyed by
``(seed, run_index)``: every run owns an independent stream, so a report does
not depend on worker count or completion order.

Device constant ``k`` scales as ``(W/L)/t_ox`` around the nominal geometry;
``V_th`` is shifted directly. The process deviation is drawn once per run and
shared by the three OTAs, the mismatch deviation is drawn per OTA.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import json
import os

import numpy as np

from .errors import MemsimError

# reported for the foundry-level model; a behavioral model cannot reproduce them
REFERENCE_SIGMA_VTH = 32.4e-3
REFERENCE_SIGMA_K = 416e-6

MAX_RESAMPLES = 100
HIST_BINS = 20
DEFAULT_SEED = 12345


@dataclass(frozen=True)
class Geometry:
    """Nominal input-pair geometry; ``t_ox`` is an assumed 4.1 nm."""

    w: float = 12e-6
    l: float = 375e-9
    t_ox: float = 4.1e-9


@dataclass(frozen=True)
class DeviationSpec:
    """Per-parameter ``(process σ, mismatch σ)`` in the parameter's units."""

    rows: dict = field(default_factory=dict)

    # rows that enter the behavioral model; the rest are carried as data
    MAPPED = ("t_ox", "v_th", "l", "w")

    def __post_init__(self):
        for name, (proc, mis) in self.rows.items():
            if proc < 0 or mis < 0:
                raise ValueError(f"negative deviation for {name}")

    def sigma(self, name):
        return self.rows.get(name, (0.0, 0.0))

    def combined(self, name):
        proc, mis = self.sigma(name)
        return float(np.hypot(proc, mis))

    @classmethod
    def zero(cls):
        return cls({})


DeviationSpec.TABLE4 = DeviationSpec({
    "t_ox": (0.2e-9, 0.02e-9),
    "v_th": (0.04, 0.004),
    "l": (2e-9, 0.2e-9),
    "w": (2e-9, 0.2e-9),
    "cjn": (0.00015, 0.000015),
    "cjswn": (0.3e-10, 0.03e-10),
    "cjswgn": (0.5e-10, 0.05e-10),
    "cgon": (0.6e-10, 0.06e-10),
    "hdifn": (2e-8, 0.2e-8),
})


def rng_for(seed, run_index):
    return np.random.Generator(np.random.Philox(key=[int(seed) % 2**64, int(run_index)]))


def _draw(rng, dev, geom):
    """One set of (V_th shift, k factor) per OTA."""
    proc = {n: rng.normal(0.0, dev.sigma(n)[0]) for n in DeviationSpec.MAPPED}
    out = []
    for _ in range(3):
        mis = {n: rng.normal(0.0, dev.sigma(n)[1]) for n in DeviationSpec.MAPPED}
        w = geom.w + proc["w"] + mis["w"]
        l = geom.l + proc["l"] + mis["l"]
        tox = geom.t_ox + proc["t_ox"] + mis["t_ox"]
        factor = (w / l) / (geom.w / geom.l) * (geom.t_ox / tox)
        out.append((proc["v_th"] + mis["v_th"], factor))
    return out


def sample_params(nominal, dev, seed, run_index, geometry=Geometry()):
    """Perturbed copy of ``nominal``; deterministic in ``(seed, run_index)``.

    Draws violating the parameter invariants are redrawn from the same
    stream, up to 100 times.
    """
    rng = rng_for(seed, run_index)
    last = None
    for _ in range(MAX_RESAMPLES):
        draws = _draw(rng, dev, geometry)
        otas = []
        try:
            for ota, (dvth, kf) in zip((nominal.ota1, nominal.ota2, nominal.ota3), draws):
                otas.append(replace(ota, v_th=ota.v_th + dvth, k=ota.k * kf))
            p = replace(nominal, ota1=otas[0], ota2=otas[1], ota3=otas[2])
            return p.check_operating_point()
        except ValueError as e:
            last = e
    raise MemsimError(f"no valid sample after {MAX_RESAMPLES} draws: {last}")


# --------------------------------------------------------------------------
# batches
# --------------------------------------------------------------------------
@dataclass
class McReport:
    case: str
    n: int
    seed: int
    runs: list  # one dict per run, in run-index order
    histograms: dict
    std: dict
    configured_sigma: dict

    @property
    def failures(self):
        return [r for r in self.runs if "error" in r]

    def pinch_fraction(self, threshold=5e-2):
        ok = [r for r in self.runs if "metrics" in r and r["metrics"]["pinch_metric"] < threshold]
        return len(ok) / self.n if self.n else 0.0

    def to_dict(self):
        return {
            "case": self.case,
            "n": self.n,
            "seed": self.seed,
            "rng": "numpy Philox4x64, key = [seed, run_index]",
            "runs": self.runs,
            "failures": len(self.failures),
            "pinch_fraction_5e-2": self.pinch_fraction(),
            "histograms": self.histograms,
            "std": self.std,
            "configured_sigma": self.configured_sigma,
            "reference_sigma": {"v_th": REFERENCE_SIGMA_VTH, "k": REFERENCE_SIGMA_K},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def histogram_csv(self):
        lines = ["parameter,bin_lo,bin_hi,count"]
        for name, h in sorted(self.histograms.items()):
            e = h["edges"]
            for i, c in enumerate(h["counts"]):
                lines.append(f"{name},{e[i]!r},{e[i + 1]!r},{c}")
        return "\n".join(lines) + "\n"


def _histogram(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return {"edges": [], "counts": []}
    counts, edges = np.histogram(values, bins=HIST_BINS)
    return {"edges": [float(x) for x in edges], "counts": [int(c) for c in counts]}


def _one_run(args):
    case_name, seed, i, dev = args
    from .scenarios import mc_case  # late import: scenarios build on this module
    case = mc_case(case_name)
    rec = {"run": i}
    try:
        p = sample_params(case.nominal, dev, seed, i)
    except MemsimError as e:
        rec["error"] = str(e)
        return rec
    rec["v_th"] = p.ota1.v_th
    rec["k"] = p.ota1.k
    try:
        rec["metrics"] = case.run(p).to_dict()
    except (MemsimError, ArithmeticError) as e:
        rec["error"] = f"{type(e).__name__}: {e}"
    return rec


def worker_count(n):
    env = os.environ.get("MEMSIM_THREADS")
    cap = int(env) if env and env.isdigit() and int(env) > 0 else (os.cpu_count() or 1)
    return max(1, min(cap, n))


def run_mc(case_name, n, seed=DEFAULT_SEED, dev=DeviationSpec.TABLE4, workers=None):
    """``n`` perturbed runs of a registered Monte Carlo case."""
    if n < 1:
        raise ValueError("n must be at least 1")
    jobs = [(case_name, seed, i, dev) for i in range(n)]
    workers = worker_count(n) if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_one_run, jobs, chunksize=max(1, n // (4 * workers))))
    else:
        runs = [_one_run(j) for j in jobs]
    vth = [r["v_th"] for r in runs if "v_th" in r]
    k = [r["k"] for r in runs if "k" in r]
    std = {
        "v_th": float(np.std(vth, ddof=1)) if len(vth) > 1 else 0.0,
        "k": float(np.std(k, ddof=1)) if len(k) > 1 else 0.0,
    }
    return McReport(
        case=case_name, n=n, seed=seed, runs=runs,
        histograms={"v_th": _histogram(vth), "k": _histogram(k)},
        std=std,
        configured_sigma={"v_th": dev.combined("v_th")},
    )
