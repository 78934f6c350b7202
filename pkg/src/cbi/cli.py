"""Command-line entry point: consolidate, check, simulate, monitor, roc.

Exit codes: 0 success; 2 failed checks or a non-OK verdict in halt mode;
64 usage/configuration errors; 74 I/O errors. CBI_LOG sets log verbosity,
CBI_PURE=1 forces the pure-Python kernel.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .consolidate import StModel, check_timing, consolidate, load_project, permutation_equivalence_check
from .errors import CbiError, TimingViolation
from .estimate import ThresholdSpec, load_margins, load_thresholds, load_topology
from .historian import read_historian, write_historian
from .monitor import MonitorConfig, roc_csv, roc_sweep, run_stream
from .plantsim import load_attacks, load_sim_config, simulate
from .runtime import KERNEL_NAME
from .stlang.pretty import pretty_project

EX_OK = 0
EX_CHECK_FAILED = 2
EX_USAGE = 64
EX_IOERR = 74

log = logging.getLogger("cbi")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EX_USAGE)


def _segments(model: StModel):
    return [(plc, model.segment_spans[plc][0]) for plc in model.plc_order]


def _side_table(model: StModel, timing_report: dict) -> dict:
    return {
        "plc_order": model.plc_order,
        "segment_spans": {k: list(v) for k, v in model.segment_spans.items()},
        "io_map": {
            entry.name: {"role": entry.role, "type": entry.ty, "owner_plc": entry.owner_plc}
            for entry in model.io_map.values()
        },
        "timing": timing_report,
    }


def _timing_report(programs) -> dict:
    report = {
        "exec_budgets_ms": {p.name: p.exec_budget_ms for p in programs},
        "task_intervals_ms": {p.name: p.task_interval_ms for p in programs},
    }
    try:
        check_timing(programs)
        report["ok"] = True
    except TimingViolation as e:
        report["ok"] = False
        report["sum_ms"] = e.sum_ms
        report["min_interval_ms"] = e.min_interval_ms
    return report


def cmd_consolidate(args) -> int:
    programs, libs = load_project(args.manifest)
    model = consolidate(programs, libs)
    timing = _timing_report(programs)
    text = pretty_project(model.master, model.lib, segments=_segments(model))
    with open(args.output, "w") as fh:
        fh.write(text)
    side_path = args.side_table or (os.path.splitext(args.output)[0] + ".side.json")
    with open(side_path, "w") as fh:
        json.dump(_side_table(model, timing), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.output} and {side_path}")
    if not timing["ok"]:
        print(f"timing violation: budgets sum {timing['sum_ms']}ms, smallest interval {timing['min_interval_ms']}ms")
        return EX_CHECK_FAILED
    return EX_OK


def cmd_check(args) -> int:
    if args.self_test:
        from .selftest import run_all

        results = run_all(fast=args.fast)
        for r in results:
            print(r.line())
        return EX_OK if all(r.passed for r in results) else EX_CHECK_FAILED

    if not args.manifest:
        print("check: -m/--manifest is required unless --self-test is given", file=sys.stderr)
        return EX_USAGE
    programs, libs = load_project(args.manifest)
    model = consolidate(programs, libs)
    print(f"parsed {len(programs)} programs; master has {len(model.master.body)} statements")
    failed = False
    timing = _timing_report(programs)
    if timing["ok"]:
        print("timing: ok")
    else:
        print(f"timing: VIOLATION ({timing['sum_ms']}ms >= {timing['min_interval_ms']}ms)")
        failed = True
    if args.topology:
        topology, _ = load_topology(args.topology)
        topology.validate_against(model)
        print("topology: ok")
    if args.permutations:
        counterexample = permutation_equivalence_check(model, trials=args.permutations)
        if counterexample is None:
            print(f"permutation equivalence: ok ({args.permutations} trials)")
        else:
            diffs = ", ".join(f"{k}: {a} vs {b}" for k, (a, b) in counterexample.diffs.items())
            print(
                "permutation equivalence: counterexample "
                f"(orders {counterexample.order_a} vs {counterexample.order_b}; {diffs})"
            )
            failed = True
    return EX_CHECK_FAILED if failed else EX_OK


def cmd_simulate(args) -> int:
    sim_doc = json.load(open(args.sim))
    sim_dir = os.path.dirname(os.path.abspath(args.sim))
    manifest = args.manifest or os.path.join(sim_dir, sim_doc.get("manifest", "manifest.json"))
    topo_path = args.topology or os.path.join(sim_dir, sim_doc.get("topology", "topology.json"))
    programs, libs = load_project(manifest)
    model = consolidate(programs, libs)
    topology, _ = load_topology(topo_path)
    cfg = load_sim_config(args.sim, topology)
    attacks = load_attacks(args.attacks) if args.attacks else []
    pairs = simulate(cfg, programs, libs, attacks)

    reported_rows = []

    def truth_stream():
        for truth, reported in pairs:
            reported_rows.append(reported)
            yield truth

    n = write_historian(truth_stream(), args.output, model)
    write_historian(reported_rows, args.reported, model)
    print(f"simulated {n} cycles -> {args.output}, {args.reported}")
    return EX_OK


def _monitor_cfg(args) -> MonitorConfig:
    tau = load_thresholds(args.tau)
    eps = load_margins(args.eps) if args.eps else {}
    return MonitorConfig(
        tau=tau,
        eps=eps,
        mode=args.mode,
        on_alarm="halt" if args.halt else "continue",
        predict_ahead=args.predict_n,
    )


def cmd_monitor(args) -> int:
    programs, libs = load_project(args.manifest)
    model = consolidate(programs, libs)
    topology, topo_tau = load_topology(args.topology)
    cfg = _monitor_cfg(args)
    windows = None
    if args.attacks:
        windows = [a.window for a in load_attacks(args.attacks)]
    verdict_sink = open(args.verdicts, "w") if args.verdicts else None
    try:
        stream = read_historian(args.input, model)
        sink = (lambda v: verdict_sink.write(v.to_json() + "\n")) if verdict_sink else None
        _, summary = run_stream(model, topology, stream, cfg, windows=windows, sink=sink, collect=False)
    finally:
        if verdict_sink:
            verdict_sink.close()
    if args.summary:
        with open(args.summary, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(json.dumps(summary, sort_keys=True))
    if summary["halted"]:
        return EX_CHECK_FAILED
    return EX_OK


def cmd_roc(args) -> int:
    programs, libs = load_project(args.manifest)
    model = consolidate(programs, libs)
    topology, _ = load_topology(args.topology)
    base_tau = load_thresholds(args.tau)
    eps = load_margins(args.eps) if args.eps else {}
    windows = [a.window for a in load_attacks(args.attacks)]
    taus = [float(t) for t in args.taus.split(",")]
    points = roc_sweep(
        model,
        topology,
        lambda: read_historian(args.benign, model),
        lambda: read_historian(args.attacked, model),
        windows,
        taus,
        eps,
        base_tau,
    )
    text = roc_csv(points)
    with open(args.output, "w") as fh:
        fh.write(text)
    print(f"wrote {len(points)} points -> {args.output}")
    return EX_OK


def cmd_example_plant(args) -> int:
    from .plants import export

    dest = export(args.dir)
    print(f"wrote example plant to {dest}")
    return EX_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="cbi", description="Control-behavior-integrity monitor toolchain")
    parser.add_argument("--version", action="store_true", help="print version and kernel, then exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("consolidate", help="merge PLC programs into one master model")
    p.add_argument("manifest", help="project manifest JSON")
    p.add_argument("-o", "--output", required=True, help="pretty-printed master .st path")
    p.add_argument("--side-table", help="JSON side table path (default: <output>.side.json)")
    p.set_defaults(fn=cmd_consolidate)

    p = sub.add_parser("check", help="validate a project, or run the self-test suites")
    p.add_argument("-m", "--manifest")
    p.add_argument("-t", "--topology")
    p.add_argument("--permutations", type=int, default=0, help="run the permutation equivalence check with N trials")
    p.add_argument("--self-test", action="store_true", help="run acceptance property suites (criteria 1-5)")
    p.add_argument("--fast", action="store_true", help="reduced trial counts for the self-test")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("simulate", help="run the synthetic plant and write historian CSVs")
    p.add_argument("sim", help="simulation config JSON")
    p.add_argument("-m", "--manifest", help="override the manifest path from sim config")
    p.add_argument("-t", "--topology", help="override the topology path from sim config")
    p.add_argument("--attacks", help="attack scenarios JSON")
    p.add_argument("-o", "--output", required=True, help="ground-truth historian CSV")
    p.add_argument("--reported", required=True, help="as-reported historian CSV")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("monitor", help="verify a reported historian stream")
    p.add_argument("-m", "--manifest", required=True)
    p.add_argument("-t", "--topology", required=True)
    p.add_argument("--tau", required=True, help="deviation thresholds JSON")
    p.add_argument("--eps", help="error margins JSON")
    p.add_argument("--in", dest="input", required=True, help="reported historian CSV")
    p.add_argument("--mode", choices=("single", "multi", "lazy"), default="lazy")
    p.add_argument("--halt", action="store_true", help="stop at the first non-OK verdict (exit 2)")
    p.add_argument("--predict-n", type=int, default=1, help="simulation interval in cycles")
    p.add_argument("--verdicts", help="write verdicts as JSON lines")
    p.add_argument("--summary", help="write the summary JSON")
    p.add_argument("--attacks", help="attack scenarios JSON (adds tpr to the summary)")
    p.set_defaults(fn=cmd_monitor)

    p = sub.add_parser("roc", help="threshold sweep over benign + attacked streams")
    p.add_argument("-m", "--manifest", required=True)
    p.add_argument("-t", "--topology", required=True)
    p.add_argument("--tau", required=True, help="nominal thresholds JSON (non-level sensors keep these)")
    p.add_argument("--eps", help="error margins JSON")
    p.add_argument("--benign", required=True, help="benign reported CSV")
    p.add_argument("--attacked", required=True, help="attacked reported CSV")
    p.add_argument("--attacks", required=True, help="attack scenarios JSON (labels)")
    p.add_argument("--taus", required=True, help="comma-separated level thresholds to sweep")
    p.add_argument("-o", "--output", required=True, help="ROC CSV path")
    p.set_defaults(fn=cmd_roc)

    p = sub.add_parser("example-plant", help="write the bundled 3-stage plant into a directory")
    p.add_argument("dir")
    p.set_defaults(fn=cmd_example_plant)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CBI_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.version:
        from . import __version__

        print(f"cbi {__version__} (kernel: {KERNEL_NAME})")
        return EX_OK
    if not getattr(args, "command", None):
        parser.print_help()
        return EX_USAGE
    try:
        return args.fn(args)
    except OSError as e:
        print(f"cbi: i/o error: {e}", file=sys.stderr)
        return EX_IOERR
    except CbiError as e:
        print(f"cbi: {e}", file=sys.stderr)
        return EX_USAGE


if __name__ == "__main__":
    sys.exit(main())
