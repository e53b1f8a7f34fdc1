#!/usr/bin/env python3
"""Reproduce the headline robustness comparison: every aggregator against
label flipping and salt-noise model poisoning at PNR 0/10/30/60 on a ring,
then render the pivot tables.

Writes sweep CSVs and reports under --out (default $VOYAGER_SIM_OUT or ./runs).
Takes a few minutes sequentially; bump --workers to parallelize cells.
"""
import argparse
import os
from pathlib import Path

from voyager_sim.attacks import AttackConfig
from voyager_sim.config import AGGREGATORS, ScenarioConfig
from voyager_sim.report import generate_report
from voyager_sim.sweep import run_sweep


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=None)
    parser.add_argument("--seeds", default="1,2,3")
    parser.add_argument("--topologies", default="ring")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    root = Path(args.out or os.environ.get("VOYAGER_SIM_OUT", "runs")) / "trends"
    seeds = [int(s) for s in args.seeds.split(",")]
    topologies = args.topologies.split(",")

    for kind in ("label_flip", "model_poison"):
        base = ScenarioConfig(attack=AttackConfig(kind=kind, pnr_percent=0))
        sweep_csv = run_sweep(
            base,
            pnrs=[0, 10, 30, 60],
            aggregators=list(AGGREGATORS),
            topologies=topologies,
            seeds=seeds,
            out_dir=root / kind,
            workers=args.workers,
        )
        print(f"== {kind} ==")
        print(generate_report(sweep_csv, root / kind / "report"))


if __name__ == "__main__":
    main()
