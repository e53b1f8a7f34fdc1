"""Run output files: rounds.csv, traffic.csv, events.csv, manifest.json, plus
optional debug dumps. Column orders are fixed and covered by golden tests;
floats are written with repr so reruns hash identically.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .config import ScenarioConfig
from .engine import ScenarioResult
from .learning import DataShard, Dataset

ROUNDS_HEADER = ["round", "node", "role", "f1", "degree"]
TRAFFIC_HEADER = ["round", "node", "bytes_sent", "bytes_received", "sim_ops", "dist_ops"]
EVENTS_HEADER = ["round", "node", "event", "peer", "score"]

RUN_FILES = ("rounds.csv", "traffic.csv", "events.csv", "manifest.json")


def _fmt(value: float) -> str:
    return repr(float(value))


def write_rounds_csv(result: ScenarioResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ROUNDS_HEADER)
        for log in result.round_logs:
            for node in sorted(log.f1):
                writer.writerow(
                    [log.round_index, node, result.roles[node], _fmt(log.f1[node]), log.degree[node]]
                )


def write_traffic_csv(result: ScenarioResult, path) -> None:
    rounds = sorted({r for r, _ in result.ledger.rows})
    nodes = sorted(result.roles)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAFFIC_HEADER)
        for r in rounds:
            for node in nodes:
                c = result.ledger.rows.get((r, node))
                if c is None:
                    writer.writerow([r, node, 0, 0, 0, 0])
                else:
                    writer.writerow([r, node, c.bytes_sent, c.bytes_received, c.sim_ops, c.dist_ops])


def write_events_csv(result: ScenarioResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVENTS_HEADER)
        for ev in result.events:
            score = "" if ev.score is None else _fmt(ev.score)
            writer.writerow([ev.round_index, ev.node, ev.event, ev.peer, score])


def write_manifest(cfg: ScenarioConfig, result: ScenarioResult, path) -> None:
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.content_hash(),
        "resolved": result.resolved,
        "status": result.status,
        "error": result.error,
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_run_outputs(cfg: ScenarioConfig, result: ScenarioResult, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rounds_csv(result, out / "rounds.csv")
    write_traffic_csv(result, out / "traffic.csv")
    write_events_csv(result, out / "events.csv")
    write_manifest(cfg, result, out / "manifest.json")
    return [out / name for name in RUN_FILES]


def write_dataset_csv(dataset: Dataset, shards: list[DataShard], path) -> None:
    """Debug dump: feature_0..feature_{D-1}, label, node_id, split."""
    dim = dataset.features.shape[1]
    owner_split: dict[int, tuple[int, str]] = {}
    for shard in shards:
        for pos, ex_id in enumerate(shard.example_ids):
            owner_split[int(ex_id)] = (shard.owner, "train" if shard.train_mask[pos] else "val")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"feature_{d}" for d in range(dim)] + ["label", "node_id", "split"])
        for row in range(len(dataset)):
            ex_id = int(dataset.example_ids[row])
            node, split = owner_split[ex_id]
            writer.writerow(
                [_fmt(v) for v in dataset.features[row]] + [int(dataset.labels[row]), node, split]
            )
