"""``memsim`` batch front end.

Exit codes: 0 success, 1 usage error, 2 netlist errors, 3 simulation failure.
Artifacts are written to a temporary directory and renamed into place, so a
failed command leaves nothing behind.
"""
import argparse
import json
import os
import sys

from . import scenarios
from .analysis import loop_metrics, sigma_phi_locus
from .circuit import run_analysis
from .errors import MemsimError, SimulationError
from .montecarlo import DEFAULT_SEED, run_mc
from .netlist import NetlistError, parse, parse_overrides, validate
from .scenarios import OverrideError, UnknownScenario, dumps, sweep_csv, write_tree
from .trace import Trace
from .units import QuantityError, parse_quantity

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_SIM = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    p = _Parser(prog="memsim", description="Memcapacitor emulator simulation engine")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, out=True):
        if out:
            sp.add_argument("--out", default="memsim-out", help="output directory")
            sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="parameter override (repeatable)")

    sub.add_parser("list", help="list registered scenarios")

    sp = sub.add_parser("scenario", help="run a named scenario")
    sp.add_argument("name")
    sp.add_argument("--axis", help="qv_sweep axis: frequency, bias or capacitance")
    sp.add_argument("--hold", help="qv_sweep frequency axis: cf or c")
    common(sp)

    sp = sub.add_parser("sweep", help="run a scenario once per parameter value")
    sp.add_argument("name")
    sp.add_argument("--param", required=True)
    sp.add_argument("--values", required=True, help="comma-separated quantities")
    common(sp)

    sp = sub.add_parser("mc", help="Monte Carlo batch of a registered case")
    sp.add_argument("case")
    sp.add_argument("--n", type=int, default=200)
    sp.add_argument("--workers", type=int, default=None)
    common(sp)

    sp = sub.add_parser("run", help="run the analyses of a netlist file")
    sp.add_argument("netlist")
    common(sp)

    sp = sub.add_parser("analyze", help="loop metrics of a trace CSV")
    sp.add_argument("trace")
    sp.add_argument("--period", required=True, help="loop period in seconds")
    sp.add_argument("--v", default="v_in")
    sp.add_argument("--q", default="q")
    sp.add_argument("--method", choices=("crossing", "window"), default="crossing")
    return p


def _overrides(args):
    over = parse_overrides(args.overrides)
    for key in ("axis", "hold"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    return over


def _flatten(metrics):
    return {k: v for k, v in metrics.items() if isinstance(v, (int, float, str, bool))}


def cmd_list(args, out):
    for name in scenarios.names():
        print(f"{name:22s} {scenarios.get(name).summary}", file=out)


def cmd_scenario(args, out):
    sc = scenarios.get(args.name)
    result = sc.run(_overrides(args))
    path = scenarios.write_artifacts(result, args.out, args.format)
    print(path, file=out)


def cmd_sweep(args, out):
    sc = scenarios.get(args.name)
    base = _overrides(args)
    try:
        values = [parse_quantity(v) for v in args.values.split(",")]
    except QuantityError as e:
        raise UsageError(f"--values: {e}") from None
    rows = []
    for v in values:
        res = sc.run({**base, args.param: v})
        rows.append({args.param: v, **_flatten(res.metrics)})
    files = {"metrics.json": dumps({"scenario": args.name, "param": args.param,
                                    "points": rows})}
    files["sweep.json" if args.format == "json" else "sweep.csv"] = (
        dumps(rows) if args.format == "json" else sweep_csv(_rectangular(rows)))
    print(write_tree(args.out, f"{args.name}_sweep", files), file=out)


def _rectangular(rows):
    cols = list(dict.fromkeys(k for r in rows for k in r))
    return [{c: r.get(c, "") for c in cols} for r in rows]


def cmd_mc(args, out):
    scenarios.mc_case(args.case)
    if args.overrides:
        raise UsageError("mc cases take no overrides")
    report = run_mc(args.case, args.n, seed=args.seed, workers=args.workers)
    files = {"metrics.json": report.to_json() + "\n",
             "histograms.csv": report.histogram_csv()}
    print(write_tree(args.out, args.case, files), file=out)


def cmd_run(args, out):
    try:
        with open(args.netlist) as fh:
            text = fh.read()
    except OSError as e:
        raise UsageError(f"cannot read {args.netlist}: {e.strerror}") from None
    spec = validate(parse(text))
    if args.overrides:
        raise UsageError("netlist runs take no overrides; edit the file")
    if not spec.analyses:
        raise UsageError("the netlist has no analysis directive")
    stem = os.path.splitext(os.path.basename(args.netlist))[0]
    files, summary = {}, {}
    for a in spec.analyses:
        tr, metrics, rows = run_analysis(spec, a, seed=args.seed)
        summary[a.name] = metrics
        if tr is not None:
            name = f"{a.name}.trace"
            files[name + (".json" if args.format == "json" else ".csv")] = (
                dumps(tr.to_dict()) if args.format == "json" else tr.to_csv_string())
        if rows is not None:
            files[f"{a.name}.sweep" + (".json" if args.format == "json" else ".csv")] = (
                dumps(rows) if args.format == "json" else sweep_csv(_rectangular(rows)))
    files["metrics.json"] = dumps({"netlist": args.netlist, "analyses": summary})
    print(write_tree(args.out, stem, files), file=out)


def cmd_analyze(args, out):
    try:
        tr = Trace.read_csv(args.trace)
        period = parse_quantity(args.period)
    except (OSError, ValueError) as e:
        raise UsageError(f"cannot analyze {args.trace}: {e}") from None
    for ch in (args.v, args.q):
        if ch not in tr:
            raise UsageError(f"trace has no channel {ch!r}; has {', '.join(tr.names)}")
    m = loop_metrics(tr, period, v=args.v, q=args.q, method=args.method)
    result = {"loop": m.to_dict()}
    if "phi_in" in tr and "sigma" in tr:
        lc = sigma_phi_locus(tr)
        result["sigma_phi"] = {"single_valued": lc.single_valued,
                               "max_fold_gap": lc.max_fold_gap}
    out.write(dumps(result))


COMMANDS = {"list": cmd_list, "scenario": cmd_scenario, "sweep": cmd_sweep,
            "mc": cmd_mc, "run": cmd_run, "analyze": cmd_analyze}


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    args = None
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args, out)
    except UsageError as e:
        print(e, file=err)
        return EXIT_USAGE
    except (OverrideError, UnknownScenario) as e:
        print(f"memsim: {e.args[0] if e.args else e}", file=err)
        return EXIT_USAGE
    except NetlistError as e:
        where = getattr(args, "netlist", None)
        for pe in e.errors:
            print(f"{where}:{pe}" if where else str(pe), file=err)
        return EXIT_PARSE
    except (SimulationError, ArithmeticError, MemsimError) as e:
        print(f"memsim: simulation failed: {e}", file=err)
        return EXIT_SIM
    except ValueError as e:
        print(f"memsim: {e}", file=err)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if not e.code else EXIT_USAGE
    return EXIT_OK


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
