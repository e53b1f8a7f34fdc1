"""Summary tables over a sweep CSV: F1 by (aggregator x PNR) per topology and
traffic totals by (aggregator x topology), as text plus machine-readable CSVs.

Rows where the MTD aggregator meets or beats the best baseline are starred.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import numpy as np

from .exceptions import ConfigError

MTD_AGGREGATOR = "voyager"


def _load_rows(sweep_csv) -> list[dict]:
    path = Path(sweep_csv)
    if not path.exists():
        raise ConfigError("sweep", f"no such file: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.DictReader(fh) if row.get("status") == "ok"]
    if not rows:
        raise ConfigError("sweep", f"{path} has no successful rows")
    return rows


def _collect(rows: list[dict]):
    f1 = defaultdict(list)  # (topology, aggregator, pnr) -> values over seeds
    traffic = defaultdict(list)  # (topology, aggregator) -> bytes over all cells
    for row in rows:
        key = (row["topology"], row["aggregator"], int(row["pnr_percent"]))
        f1[key].append(float(row["mean_benign_f1"]))
        traffic[(row["topology"], row["aggregator"])].append(int(row["total_bytes"]))
    return f1, traffic


def generate_report(sweep_csv, out_dir) -> str:
    """Write report.txt plus per-topology F1 CSVs and a traffic CSV; returns
    the report text."""
    rows = _load_rows(sweep_csv)
    f1, traffic = _collect(rows)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    topologies = sorted({k[0] for k in f1})
    lines = []
    for topology in topologies:
        aggregators = sorted({k[1] for k, _ in f1.items() if k[0] == topology})
        pnrs = sorted({k[2] for k in f1 if k[0] == topology})
        lines.append(f"mean benign F1 by aggregator x PNR ({topology})")
        header = ["aggregator"] + [f"pnr{p}" for p in pnrs]
        lines.append("  " + "  ".join(f"{h:>14}" for h in header))
        best_baseline = {
            p: max(
                (np.mean(f1[(topology, a, p)]) for a in aggregators if a != MTD_AGGREGATOR and (topology, a, p) in f1),
                default=None,
            )
            for p in pnrs
        }
        csv_rows = []
        for agg in aggregators:
            cells = [f"{agg:>14}"]
            csv_row = {"aggregator": agg}
            for p in pnrs:
                key = (topology, agg, p)
                if key not in f1:
                    cells.append(f"{'-':>14}")
                    csv_row[f"pnr{p}"] = ""
                    continue
                mean = float(np.mean(f1[key]))
                std = float(np.std(f1[key]))
                star = (
                    "*"
                    if agg == MTD_AGGREGATOR
                    and best_baseline[p] is not None
                    and mean >= best_baseline[p]
                    else " "
                )
                cells.append(f"{mean:0.3f}+-{std:0.3f}{star}".rjust(14))
                csv_row[f"pnr{p}"] = repr(mean)
            lines.append("  " + "  ".join(cells))
            csv_rows.append(csv_row)
        lines.append("")
        with open(out / f"f1_{topology}.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=header)
            writer.writeheader()
            writer.writerows(csv_rows)

    lines.append("mean total bytes by aggregator x topology")
    lines.append("  " + "  ".join(f"{h:>14}" for h in ["aggregator"] + topologies))
    traffic_rows = []
    for agg in sorted({k[1] for k in traffic}):
        cells = [f"{agg:>14}"]
        csv_row = {"aggregator": agg}
        for topology in topologies:
            key = (topology, agg)
            value = float(np.mean(traffic[key])) if key in traffic else None
            cells.append(f"{value:0.0f}".rjust(14) if value is not None else f"{'-':>14}")
            csv_row[topology] = repr(value) if value is not None else ""
        lines.append("  " + "  ".join(cells))
        traffic_rows.append(csv_row)
    with open(out / "traffic_by_topology.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["aggregator"] + topologies)
        writer.writeheader()
        writer.writerows(traffic_rows)

    text = "\n".join(lines) + "\n"
    (out / "report.txt").write_text(text, encoding="utf-8")
    return text
