"""Command-line interface: simulate, risk, sweep, report.

Exit codes: 0 success, 1 runtime failure (partial outputs are kept),
2 invalid configuration or arguments. The output root defaults to
$VOYAGER_SIM_OUT, then ./runs.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from .config import AGGREGATORS, ScenarioConfig
from .engine import run_scenario
from .exceptions import ConfigError, SimulationError
from .io import write_dataset_csv, write_run_outputs
from .learning import generate_task, partition_iid
from .params import save_checkpoint
from .report import generate_report
from .rng import sub_seed
from .sweep import run_sweep
from .topology import (
    add_edge,
    build_risk_profile,
    build_topology,
    connection_threshold_kappa_n,
    write_edge_list,
    write_mutation_log,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _out_root() -> Path:
    return Path(os.environ.get("VOYAGER_SIM_OUT", "runs"))


def _resolve_out(flag_out: str | None, cfg_out: str | None, default_name: str) -> Path:
    if flag_out:
        return Path(flag_out)
    if cfg_out:
        return Path(cfg_out)
    return _out_root() / default_name


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part != ""]


def _str_list(text: str) -> list[str]:
    return [part for part in text.split(",") if part != ""]


def cmd_simulate(args) -> int:
    cfg = ScenarioConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(master_seed=args.seed)
    out = _resolve_out(args.out, cfg.out_dir, f"run-{cfg.content_hash()[:8]}")
    result = run_scenario(cfg)
    write_run_outputs(cfg, result, out)
    if args.dump_topology or args.dump_dataset or args.dump_models:
        _write_debug_dumps(args, cfg, result, out)
    last = result.round_logs[-1] if result.round_logs else None
    f1 = result.mean_benign_f1() if last else float("nan")
    print(
        f"status={result.status} rounds={len(result.round_logs)} "
        f"mean_benign_f1={f1:0.4f} total_bytes={result.ledger.total_bytes_sent()} out={out}"
    )
    if result.status != "ok":
        print(f"error: {result.error}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _write_debug_dumps(args, cfg, result, out: Path) -> None:
    if args.dump_topology:
        graph = build_topology(cfg.topology, cfg.n_nodes, sub_seed(cfg.master_seed, "topology"), cfg.random_p)
        write_edge_list(graph, out / "initial_edges.txt")
        # final graph reconstructed by replaying deploy events
        final = graph.copy()
        for ev in result.events:
            if ev.event == "deploy" and not final.has_edge(ev.node, ev.peer):
                add_edge(final, ev.node, ev.peer, ev.round_index)
        write_edge_list(final, out / "final_edges.txt")
        write_mutation_log(final, out / "mutations.csv")
    if args.dump_dataset:
        dataset = generate_task(cfg.task)
        shards = partition_iid(dataset, cfg.n_nodes, sub_seed(cfg.master_seed, "partition"))
        write_dataset_csv(dataset, shards, out / "dataset.csv")
    if args.dump_models:
        models_dir = out / "models"
        models_dir.mkdir(exist_ok=True)
        for node, model in sorted(result.final_models.items()):
            save_checkpoint(model, models_dir / f"node_{node:03d}.bin")


def cmd_risk(args) -> int:
    graph = build_topology(args.topology, args.n, args.seed, args.random_p)
    profile = build_risk_profile(graph, args.alpha)
    kappa = (
        connection_threshold_kappa_n(args.n, args.alpha, profile.edges_per_node_bar)
        if args.alpha > 0
        else None
    )
    print(f"topology={args.topology} n={args.n} alpha={args.alpha}")
    print(f"edges_per_node_bar={profile.edges_per_node_bar:0.4f} draw_count={profile.draw_count}")
    print(f"expected_malicious={profile.expected_malicious:0.4f}")
    print("pmf:")
    for k in sorted(profile.pmf):
        print(f"  k={k}  p={profile.pmf[k]:0.6f}")
    print("per_node_risk:")
    for node, risk in enumerate(profile.per_node_risk):
        print(f"  node={node} degree={graph.degree(node)} risk={risk:0.4f}")
    if kappa is not None:
        suffix = " (saturated)" if kappa.saturated else ""
        print(f"kappa_n={kappa.value}{suffix}")
    else:
        print("kappa_n=current degree (alpha=0, no expansion needed)")
    out = _resolve_out(args.out, None, "risk")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "risk.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "key", "value"])
        writer.writerow(["summary", "topology", args.topology])
        writer.writerow(["summary", "n_nodes", args.n])
        writer.writerow(["summary", "alpha", repr(args.alpha)])
        writer.writerow(["summary", "edges_per_node_bar", repr(profile.edges_per_node_bar)])
        writer.writerow(["summary", "draw_count", profile.draw_count])
        writer.writerow(["summary", "expected_malicious", repr(profile.expected_malicious)])
        if kappa is not None:
            writer.writerow(["summary", "kappa_n", kappa.value])
            writer.writerow(["summary", "kappa_n_saturated", kappa.saturated])
        for k in sorted(profile.pmf):
            writer.writerow(["pmf", k, repr(profile.pmf[k])])
        for node, risk in enumerate(profile.per_node_risk):
            writer.writerow(["node_risk", node, repr(risk)])
    print(f"wrote {out / 'risk.csv'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = ScenarioConfig.load(args.config)
    out = _resolve_out(args.out, None, "sweep")
    path = run_sweep(
        base,
        pnrs=_int_list(args.pnr),
        aggregators=_str_list(args.aggregators),
        topologies=_str_list(args.topologies),
        seeds=_int_list(args.seeds),
        out_dir=out,
        workers=args.workers,
    )
    print(f"wrote {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = _resolve_out(args.out, None, "report")
    text = generate_report(args.sweep, out)
    print(text, end="")
    print(f"wrote {out / 'report.txt'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voyager-sim",
        description="Deterministic DFL poisoning-attack simulator with topology risk analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario from a config file")
    sim.add_argument("--config", required=True, help="scenario config JSON")
    sim.add_argument("--out", help="output directory")
    sim.add_argument("--seed", type=int, help="override master_seed")
    sim.add_argument("--dump-topology", action="store_true", help="write edge lists and mutation log")
    sim.add_argument("--dump-dataset", action="store_true", help="write the partitioned dataset CSV")
    sim.add_argument("--dump-models", action="store_true", help="write final model checkpoints")
    sim.set_defaults(func=cmd_simulate)

    risk = sub.add_parser("risk", help="print the analytic risk table for a topology")
    risk.add_argument("--topology", default="ring", help="ring|star|random|full")
    risk.add_argument("--n", type=int, default=10)
    risk.add_argument("--alpha", type=float, required=True, help="malicious fraction in [0, 1]")
    risk.add_argument("--random-p", type=float, default=0.3)
    risk.add_argument("--seed", type=int, default=1)
    risk.add_argument("--out", help="output directory for risk.csv")
    risk.set_defaults(func=cmd_risk)

    swp = sub.add_parser("sweep", help="run a (topology x aggregator x pnr x seed) grid")
    swp.add_argument("--config", required=True, help="base scenario config JSON")
    swp.add_argument("--pnr", default="0,10,30,60", help="comma-separated PNR percents")
    swp.add_argument("--aggregators", default=",".join(AGGREGATORS))
    swp.add_argument("--topologies", default="ring")
    swp.add_argument("--seeds", default="1,2,3")
    swp.add_argument("--out", help="output directory for sweep.csv")
    swp.add_argument("--workers", type=int, default=1)
    swp.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="pivot tables from a sweep CSV")
    rep.add_argument("--sweep", required=True, help="path to sweep.csv")
    rep.add_argument("--out", help="output directory for report files")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
