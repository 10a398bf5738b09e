"""Command-line front door: run experiments, sweeps, and config tooling.

Subcommands:

* ``run``               one experiment (topology + workload, optional regions/faults)
* ``sweep``             the full settings x levels x directions grid from a plan file
* ``gen-paper-configs`` write the three star6 topologies plus sample workload/sweep files
* ``place``             dump replica placements for keys at a data location
* ``validate``          parse and validate config files without running
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .consistency import load_regions
from .errors import ConfigError
from .experiment import (
    PAPER_LATENCY_SETTINGS,
    STAR_CLIENT_GEO,
    load_sweep_plan,
    make_paper_topologies,
    run_single,
    run_sweep,
)
from .netsim import BudgetExceededError, load_fault_script
from .placement import place_replicas, placement_csv_rows
from .topology import load_topology
from .workload import STATS_CSV_HEADER, format_stats_row, load_workload

SAMPLE_WORKLOAD = """\
{
  "op_count": 10000,
  "read_fraction": 0.95,
  "key_prefix": "key-",
  "recency_skew": 0.3,
  "clients": [{"id": "ycsb", "geo": [%(x)s, 0.0], "weight": 1.0}],
  "seed": 42
}
"""

SAMPLE_SWEEP = """\
{
  "workload": "star6-workload.json",
  "settings": [
    {"name": "low", "topology": "star6-low.json"},
    {"name": "medium", "topology": "star6-medium.json"},
    {"name": "high", "topology": "star6-high.json"}
  ],
  "levels": ["ONE", "TWO", "QUORUM", "ALL"],
  "directions": ["read", "write"],
  "replication_factor": 5
}
"""


def _write_output(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _cmd_run(args: argparse.Namespace) -> int:
    topology = load_topology(args.topology)
    workload = load_workload(args.workload)
    if args.seed is not None:
        workload = replace(workload, seed=args.seed)
    if args.ops is not None:
        workload = replace(workload, op_count=args.ops)
    region_set = load_regions(args.regions) if args.regions else None
    if region_set is None and workload.fixed_read_level is None and workload.fixed_write_level is None:
        raise ConfigError(
            args.workload,
            "fixed_read_level/fixed_write_level: required when no regions file is given",
        )
    fault_script = load_fault_script(args.faults) if args.faults else ()

    trace_file = open(args.trace, "w") if args.trace else None
    try:
        trace_sink = (lambda line: trace_file.write(line + "\n")) if trace_file else None
        output = run_single(
            topology,
            workload,
            region_set=region_set,
            replication_factor=args.rf,
            timeout_ms=args.timeout_ms,
            fault_script=fault_script,
            trace_sink=trace_sink,
            budget_ms=args.budget_ms,
        )
    finally:
        if trace_file is not None:
            trace_file.close()

    setting = args.setting_name or Path(args.topology).stem
    lines = [STATS_CSV_HEADER]
    for kind in ("read", "write"):
        if output.stats.count(kind) == 0:
            continue
        if region_set is not None:
            level_label = "region"
        else:
            level = workload.fixed_read_level if kind == "read" else workload.fixed_write_level
            level_label = level.value if level else "-"
        lines.append(format_stats_row(setting, level_label, kind, output.stats.summary(kind)))
    _write_output("\n".join(lines) + "\n", args.out)
    for label, count in sorted(output.error_counts.items()):
        print(f"note: {count} operations failed with {label}", file=sys.stderr)
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    plan = load_sweep_plan(args.config)
    if args.seed is not None:
        plan.workload = replace(plan.workload, seed=args.seed)
    if args.ops is not None:
        plan.workload = replace(plan.workload, op_count=args.ops)
    if args.budget_ms is not None:
        plan.budget_ms = args.budget_ms
    result = run_sweep(plan)
    _write_output(result.csv_text, args.out)
    for failure in result.cell_failures:
        print(f"cell failed: {failure}", file=sys.stderr)
    return 3 if result.cell_failures else 0


def _cmd_gen_paper_configs(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    paths = make_paper_topologies(out_dir)
    workload_path = out_dir / "star6-workload.json"
    workload_path.write_text(SAMPLE_WORKLOAD % {"x": STAR_CLIENT_GEO[0]})
    sweep_path = out_dir / "star6-sweep.json"
    sweep_path.write_text(SAMPLE_SWEEP)
    for name in PAPER_LATENCY_SETTINGS:
        print(paths[name])
    print(workload_path)
    print(sweep_path)
    return 0


def _cmd_place(args: argparse.Namespace) -> int:
    topology = load_topology(args.topology)
    try:
        x_str, y_str = args.at.split(",")
        location = (float(x_str), float(y_str))
    except ValueError:
        raise ConfigError("--at", f"expected X,Y coordinates, got {args.at!r}") from None
    maps = [place_replicas(key, location, topology, args.rf) for key in args.keys]
    _write_output("\n".join(placement_csv_rows(maps)) + "\n", args.out)
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    checks = [
        ("topology", args.topology, load_topology),
        ("regions", args.regions, load_regions),
        ("workload", args.workload, load_workload),
        ("faults", args.faults, load_fault_script),
    ]
    given = [(label, path, loader) for label, path, loader in checks if path]
    if not given:
        print("nothing to validate: pass --topology/--regions/--workload/--faults", file=sys.stderr)
        return 2
    failures = 0
    topology = None
    for label, path, loader in given:
        try:
            loaded = loader(path)
            if label == "topology":
                topology = loaded
            print(f"ok: {path}")
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            failures += 1
    if topology is not None and args.faults and failures == 0:
        for action in load_fault_script(args.faults):
            for nid in ([action.node] if action.node else []) + sorted(action.group_a | action.group_b):
                if nid not in topology.nodes:
                    print(f"error: {args.faults}: unknown node {nid!r}", file=sys.stderr)
                    failures += 1
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fogstore-sim",
        description="Replicated fog key-value store simulator and latency benchmark harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a single experiment")
    run.add_argument("--topology", required=True)
    run.add_argument("--workload", required=True)
    run.add_argument("--regions", help="consistency regions file (omit to use fixed levels)")
    run.add_argument("--faults", help="fault script file")
    run.add_argument("--rf", type=int, default=5, help="replication factor (default 5)")
    run.add_argument("--seed", type=int, help="override the workload seed")
    run.add_argument("--ops", type=int, help="override the workload op count")
    run.add_argument("--timeout-ms", type=float, default=10_000.0)
    run.add_argument("--budget-ms", type=float, help="abort if the sim clock passes this")
    run.add_argument("--setting-name", help="setting label for CSV rows (default: topology stem)")
    run.add_argument("--out", help="CSV output path (default stdout)")
    run.add_argument("--trace", help="write an event trace to this path")
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="run a settings x levels x directions sweep")
    sweep.add_argument("--config", required=True, help="sweep plan JSON file")
    sweep.add_argument("--seed", type=int, help="override the workload seed")
    sweep.add_argument("--ops", type=int, help="override the workload op count")
    sweep.add_argument("--budget-ms", type=float, help="per-cell simulated-time budget")
    sweep.add_argument("--out", help="CSV output path (default stdout)")
    sweep.set_defaults(func=_cmd_sweep)

    gen = sub.add_parser("gen-paper-configs",
                         help="write the star6 low/medium/high topologies and sample configs")
    gen.add_argument("--out-dir", default=".", help="directory to write into")
    gen.set_defaults(func=_cmd_gen_paper_configs)

    place = sub.add_parser("place", help="dump replica placements as CSV")
    place.add_argument("--topology", required=True)
    place.add_argument("--rf", type=int, default=5)
    place.add_argument("--at", required=True, help="data location as X,Y meters")
    place.add_argument("--out", help="output path (default stdout)")
    place.add_argument("keys", nargs="+", help="keys to place")
    place.set_defaults(func=_cmd_place)

    validate = sub.add_parser("validate", help="check config files without running")
    validate.add_argument("--topology")
    validate.add_argument("--regions")
    validate.add_argument("--workload")
    validate.add_argument("--faults")
    validate.set_defaults(func=_cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
