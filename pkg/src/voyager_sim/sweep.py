"""Config-driven scenario sweeps over (topology x aggregator x PNR x seed).

Every cell is one full run keyed by the hash of its resolved config, so an
interrupted sweep resumes by skipping completed cells and the final CSV is
identical either way. Cell failures are recorded in their row and the sweep
continues.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .engine import run_scenario
from .exceptions import ConfigError, SimulationError

logger = logging.getLogger(__name__)

SWEEP_HEADER = [
    "topology",
    "aggregator",
    "attack",
    "pnr_percent",
    "seed",
    "mean_benign_f1",
    "std_benign_f1",
    "total_bytes",
    "status",
    "error",
    "cell_hash",
]


def build_cells(
    base: ScenarioConfig,
    pnrs: list[int],
    aggregators: list[str],
    topologies: list[str],
    seeds: list[int],
) -> list[dict]:
    """Cross-product in deterministic grid order; invalid combinations become
    error rows instead of aborting the sweep."""
    if not (pnrs and aggregators and topologies and seeds):
        raise ConfigError("sweep", "pnr, aggregator, topology, and seed lists must be non-empty")
    cells = []
    for topology in topologies:
        for aggregator in aggregators:
            for pnr in pnrs:
                for seed in seeds:
                    key = {
                        "topology": topology,
                        "aggregator": aggregator,
                        "attack": base.attack.kind,
                        "pnr_percent": pnr,
                        "seed": seed,
                    }
                    try:
                        cfg = base.replace(
                            topology=topology,
                            aggregator=aggregator,
                            attack=dataclasses.replace(base.attack, pnr_percent=pnr),
                            master_seed=seed,
                        )
                        cells.append({**key, "config": cfg, "cell_hash": cfg.content_hash()})
                    except (ConfigError, ValueError) as exc:
                        cells.append({**key, "config": None, "cell_hash": "", "error": str(exc)})
    return cells


def _run_cell(cfg_dict: dict) -> dict:
    try:
        cfg = ScenarioConfig.from_dict(cfg_dict)
        result = run_scenario(cfg)
    except SimulationError as exc:
        return {"status": "error", "error": str(exc)}
    if result.status != "ok":
        return {"status": "error", "error": result.error or "run failed"}
    last = result.round_logs[-1]
    benign = result.benign_nodes()
    values = [last.f1[i] for i in benign]
    return {
        "status": "ok",
        "error": "",
        "mean_benign_f1": repr(float(np.mean(values))),
        "std_benign_f1": repr(float(np.std(values))),
        "total_bytes": result.ledger.total_bytes_sent(),
    }


def _load_completed(path: Path) -> dict[str, dict]:
    if not path.exists():
        return {}
    completed = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            if row.get("status") == "ok" and row.get("cell_hash"):
                completed[row["cell_hash"]] = row
    return completed


def run_sweep(
    base: ScenarioConfig,
    pnrs: list[int],
    aggregators: list[str],
    topologies: list[str],
    seeds: list[int],
    out_dir,
    workers: int = 1,
) -> Path:
    """Run the grid and write sweep.csv under out_dir; returns its path.

    Rows stream to disk in grid order as cells finish, so an interrupted
    sweep leaves a valid prefix; rerunning skips those cells and produces
    the same final file as an uninterrupted run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "sweep.csv"
    completed = _load_completed(csv_path)
    cells = build_cells(base, pnrs, aggregators, topologies, seeds)

    pending = [
        (idx, cell)
        for idx, cell in enumerate(cells)
        if cell["config"] is not None and cell["cell_hash"] not in completed
    ]
    if workers > 1 and len(pending) > 1:
        pool = ProcessPoolExecutor(max_workers=workers)
        outcome_iter = pool.map(_run_cell, [cell["config"].to_dict() for _, cell in pending])
    else:
        pool = None
        outcome_iter = (_run_cell(cell["config"].to_dict()) for _, cell in pending)
    pending_ids = {idx for idx, _ in pending}

    try:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=SWEEP_HEADER)
            writer.writeheader()
            for idx, cell in enumerate(cells):
                row = {
                    "topology": cell["topology"],
                    "aggregator": cell["aggregator"],
                    "attack": cell["attack"],
                    "pnr_percent": cell["pnr_percent"],
                    "seed": cell["seed"],
                    "mean_benign_f1": "",
                    "std_benign_f1": "",
                    "total_bytes": "",
                    "status": "error",
                    "error": cell.get("error", ""),
                    "cell_hash": cell["cell_hash"],
                }
                if cell["cell_hash"] in completed:
                    row = {key: completed[cell["cell_hash"]].get(key, "") for key in SWEEP_HEADER}
                elif idx in pending_ids:
                    row.update(next(outcome_iter))
                    logger.info(
                        "cell %s/%s/pnr%s/seed%s: %s",
                        cell["topology"],
                        cell["aggregator"],
                        cell["pnr_percent"],
                        cell["seed"],
                        row["status"],
                    )
                writer.writerow(row)
                fh.flush()
    finally:
        if pool is not None:
            pool.shutdown()
    return csv_path
