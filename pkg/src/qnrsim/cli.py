"""Command line entry point: ``qnrsim <subcommand> ...``.

Every subcommand reads and writes the package's plain-text formats, so the
steps compose in a shell pipeline.  Exit codes: 0 success, 1 only
infeasible results, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .analysis import CSV_COLUMNS, EXTRA_COLUMNS, DelayModelParams, compute_metrics, format_value
from .errors import QnrError
from .harness import (admit, emit_plots, exit_status, load_config, profile_csv,
                      profile_schedule, read_csv, run_algorithm, run_scenario, ScenarioConfig)
from .routing import ReconfigProblem, dump_routing, load_routing
from .topology import FatTreeParams, dump_topology, generate_fat_tree, load_topology
from .workload import SizeDistribution, WorkloadParams, dump_flows, generate_workload, inject_big_flows, load_flows

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE = 0, 1, 2


def _write(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _read(path: str) -> str:
    return sys.stdin.read() if path == "-" else Path(path).read_text()


def _problem(args) -> ReconfigProblem:
    t = load_topology(_read(args.topology))
    fs = load_flows(_read(args.flows), t)
    current = load_routing(_read(args.current), fs, t.n)
    return ReconfigProblem(t, fs, current, args.mu)


def cmd_gen_topo(args) -> int:
    t = generate_fat_tree(FatTreeParams(args.K, args.capacity, args.controller_delay))
    _write(dump_topology(t), args.output)
    return EXIT_OK


def cmd_gen_flows(args) -> int:
    t = load_topology(_read(args.topology))
    wp = WorkloadParams(p=args.p, pl=args.pl, seed=args.seed,
                        size_distribution=SizeDistribution.parse(args.distribution))
    fs = inject_big_flows(generate_workload(t, wp), args.big_flows, args.big_mbps, t, args.pl, args.seed)
    _write(dump_flows(fs), args.output)
    return EXIT_OK


def cmd_admit(args) -> int:
    t = load_topology(_read(args.topology))
    fs = load_flows(_read(args.flows), t)
    adm = admit(t, fs, args.mu, args.demand_scale)
    if args.admitted:
        Path(args.admitted).write_text(dump_flows(adm.problem.flows))
    _write(dump_routing(adm.problem.current, adm.problem.flows), args.output)
    if adm.dropped:
        print(f"dropped {len(adm.dropped)} flows: {' '.join(map(str, adm.dropped))}", file=sys.stderr)
    return EXIT_OK


def cmd_reconfigure(args) -> int:
    prob = _problem(args)
    cfg = ScenarioConfig(algorithms=(args.algorithm,), lower_band_mbps=args.lower_band,
                         upper_bound_mbps=args.upper_bound, max_path_hops=args.max_hops,
                         time_budget_s=args.time_budget, max_nodes=args.max_nodes)
    sol, _ = run_algorithm(args.algorithm, prob, cfg)
    print(f"status={sol.status} objective={format_value(sol.objective)}", file=sys.stderr)
    if sol.routing is None:
        return EXIT_INFEASIBLE
    _write(dump_routing(sol.routing, prob.flows), args.output)
    return EXIT_OK


def cmd_metrics(args) -> int:
    prob = _problem(args)
    new = load_routing(_read(args.new), prob.flows, prob.topology.n)
    m = compute_metrics(new, prob.current, prob, DelayModelParams(per_entry_update_ms=args.per_entry_ms))
    fields = {
        "sftc": m.sftc, "changed_pct": m.changed_pct, "rerouted_count": m.rerouted_count,
        "rerouted_pct": m.rerouted_pct, "max_nftc": m.max_nftc, "reconfig_delay_ms": m.reconfig_delay_ms,
        "ctrl_msg_delay_s": m.ctrl_msg_delay_s, "loss_volume_mb": m.loss_volume_mb,
        "changed_links_distinct": m.changed_links_distinct,
    }
    _write("".join(f"{k}={format_value(v)}\n" for k, v in fields.items()), args.output)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg = ScenarioConfig(**{**cfg.snapshot(), "output_dir": args.out})
    if args.workers:
        cfg = ScenarioConfig(**{**cfg.snapshot(), "workers": args.workers})
    records = run_scenario(cfg)
    for r in records:
        row = r.row()
        print(f"{row['scenario_id']} {row['algorithm']}: {row['status']} sftc={row['sftc']}", file=sys.stderr)
    return exit_status(records)


def cmd_profile(args) -> int:
    profiles = profile_schedule(tuple(args.p), K=args.K, seed=args.seed, repeats=args.repeats)
    _write(profile_csv(profiles), args.output)
    return EXIT_OK


def cmd_plot(args) -> int:
    rows = read_csv(args.csv)
    missing = [c for c in CSV_COLUMNS + EXTRA_COLUMNS if rows and c not in rows[0]]
    if missing:
        raise QnrError(f"{args.csv}: missing columns {missing}")
    for path in emit_plots(rows, args.out):
        print(path)
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qnrsim", description="QoS-aware minimal-change flow reconfiguration")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-topo", help="write a fat-tree topology file")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--capacity", type=int, default=1000, help="link capacity in Mb/s")
    p.add_argument("--controller-delay", type=float, default=0.001, help="seconds")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen_topo)

    p = sub.add_parser("gen-flows", help="write a synthetic flow file")
    p.add_argument("--topology", required=True)
    p.add_argument("-p", type=int, required=True)
    p.add_argument("--pl", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--distribution", default="mixture:0.9,1,10,50,200")
    p.add_argument("--big-flows", type=int, default=0)
    p.add_argument("--big-mbps", type=float, default=500.0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen_flows)

    def problem_args(q, current_name="--current"):
        q.add_argument("--topology", required=True)
        q.add_argument("--flows", required=True)
        q.add_argument(current_name, dest="current", required=True, help="current routing file")
        q.add_argument("--mu", default="1")

    p = sub.add_parser("admit", help="route flows one at a time to build the current routing")
    p.add_argument("--topology", required=True)
    p.add_argument("--flows", required=True)
    p.add_argument("--mu", default="1")
    p.add_argument("--demand-scale", type=float, default=1.0,
                   help="admit at demand/scale; the admitted flows keep full demand")
    p.add_argument("--admitted", help="write the admitted flow file here")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_admit)

    p = sub.add_parser("reconfigure", help="compute a new routing")
    problem_args(p)
    p.add_argument("--algorithm", choices=("qnr", "rqnr", "spf"), default="qnr")
    p.add_argument("--lower-band", type=float, default=10.0)
    p.add_argument("--upper-bound", type=float, default=100.0)
    p.add_argument("--max-hops", type=int, default=6)
    p.add_argument("--time-budget", type=float, default=60.0)
    p.add_argument("--max-nodes", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_reconfigure)

    p = sub.add_parser("metrics", help="overhead metrics of a new routing against the current one")
    problem_args(p)
    p.add_argument("--new", required=True)
    p.add_argument("--per-entry-ms", type=float, default=1.0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("sweep", help="run a scenario config")
    p.add_argument("config")
    p.add_argument("--out", help="override output_dir")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("profile-constraints", help="time the validation sweep of each constraint")
    p.add_argument("--K", type=int, default=4)
    p.add_argument("-p", type=_int_list, default=[100, 200, 300, 400])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("plot", help="render figure families from a metrics CSV")
    p.add_argument("csv")
    p.add_argument("--out", default="plots")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (QnrError, ValueError, OSError) as exc:
        print(f"qnrsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
