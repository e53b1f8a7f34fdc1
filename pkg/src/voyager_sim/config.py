"""Declarative scenario configuration and its JSON round-trip.

A config file is the reproducibility artifact: every knob including seeds is
explicit, nothing is wall-clock derived. ``ScenarioConfig.from_dict`` reports
the offending field on any violation so the CLI can exit with a precise
message.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .attacks import AttackConfig
from .exceptions import ConfigError
from .learning import SyntheticTask, TrainConfig
from .topology import TOPOLOGY_KINDS
from .voyager import VoyagerConfig

AGGREGATORS = ("fedavg", "krum", "trimmed_mean", "median", "fltrust", "voyager")


@dataclass(frozen=True)
class ScenarioConfig:
    task: SyntheticTask = field(default_factory=SyntheticTask)
    train: TrainConfig = field(default_factory=TrainConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    voyager: VoyagerConfig = field(default_factory=VoyagerConfig)
    n_nodes: int = 10
    topology: str = "ring"
    random_p: float = 0.3
    rounds: int = 10
    aggregator: str = "krum"
    trim_fraction: float = 0.2
    master_seed: int = 1
    observation_node: int | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if self.n_nodes < 3:
            raise ConfigError("n_nodes", f"need at least 3 nodes, got {self.n_nodes}")
        if self.topology not in TOPOLOGY_KINDS:
            raise ConfigError("topology", f"{self.topology!r} not in {TOPOLOGY_KINDS}")
        if self.rounds < 1:
            raise ConfigError("rounds", "must run at least one round")
        if self.aggregator not in AGGREGATORS:
            raise ConfigError("aggregator", f"{self.aggregator!r} not in {AGGREGATORS}")
        if not 0.0 <= self.trim_fraction < 0.5:
            raise ConfigError("trim_fraction", f"must be in [0, 0.5), got {self.trim_fraction}")
        if self.master_seed < 0:
            raise ConfigError("master_seed", "must be a non-negative integer")
        if self.observation_node is not None and not 0 <= self.observation_node < self.n_nodes:
            raise ConfigError("observation_node", f"must be in [0, {self.n_nodes}), got {self.observation_node}")
        attackers = round(self.n_nodes * self.attack.pnr_percent / 100)
        if attackers >= self.n_nodes:
            raise ConfigError("attack.pnr_percent", "at least one benign node is required")

    @property
    def alpha(self) -> float:
        return self.attack.pnr_percent / 100.0

    def to_dict(self) -> dict:
        return _as_jsonable(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        for key in raw:
            if key not in known:
                raise ConfigError(key, "unknown field")
        kwargs = dict(raw)
        for key, sub_cls in (
            ("task", SyntheticTask),
            ("train", TrainConfig),
            ("attack", AttackConfig),
            ("voyager", VoyagerConfig),
        ):
            if key in kwargs:
                kwargs[key] = _build_section(key, sub_cls, kwargs[key])
        try:
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError("<root>", str(exc)) from exc

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def content_hash(self) -> str:
        """Stable digest of everything that affects the run (out_dir excluded)."""
        payload = self.to_dict()
        payload.pop("out_dir", None)
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def _build_section(name: str, sub_cls, raw) -> object:
    if isinstance(raw, sub_cls):
        return raw
    if not isinstance(raw, dict):
        raise ConfigError(name, "expected an object")
    known = {f.name for f in dataclasses.fields(sub_cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{name}.{key}", "unknown field")
    try:
        return sub_cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, str(exc)) from exc


def _as_jsonable(value):
    if isinstance(value, dict):
        return {k: _as_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_as_jsonable(v) for v in value]
    return value
