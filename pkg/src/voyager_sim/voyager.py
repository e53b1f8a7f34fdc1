"""The three-stage MTD aggregation protocol: anomaly detection, reputation-
gated neighbor exploration, and connection deployment.

A node flags peers whose shared model drifts below the similarity trigger,
grows its neighbor list along the existing graph (admitting only candidates
whose reputation clears the gate) up to the connection target, and then wires
up the new neighbors. Aggregation over the expanded set is plain Krum; the
engine owns that step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

from .params import LayeredParams, cosine_similarity_layerwise
from .topology import TopologyGraph, add_edge

logger = logging.getLogger(__name__)

EVENT_KINDS = ("trigger", "admit", "reject_reputation", "reject_full", "deploy")


@dataclass(frozen=True)
class VoyagerConfig:
    """Thresholds for the MTD protocol.

    kappa_s: similarity trigger; a peer below it is flagged. -1 never triggers.
    kappa_r: reputation admission gate; defaults to kappa_s.
    kappa_n_policy: "formula" derives the connection target from the initial
        topology and attacker ratio; "fixed" uses kappa_n_fixed.
    trigger_on_high: flips the comparator so *high* similarity triggers;
        kept only for studying the inverted variant, not used by scenarios.
    """

    kappa_s: float = 0.5
    kappa_r: float | None = None
    kappa_n_policy: str = "formula"
    kappa_n_fixed: int | None = None
    default_reputation: float = 1.0
    trigger_on_high: bool = False

    def __post_init__(self):
        if not -1.0 <= self.kappa_s <= 1.0:
            raise ValueError(f"kappa_s must be in [-1, 1], got {self.kappa_s}")
        if self.kappa_r is not None and self.kappa_r > 1.0:
            raise ValueError(f"kappa_r must be <= 1, got {self.kappa_r}")
        if self.kappa_n_policy not in ("formula", "fixed"):
            raise ValueError(f"kappa_n_policy must be 'formula' or 'fixed', got {self.kappa_n_policy!r}")
        if self.kappa_n_policy == "fixed" and (self.kappa_n_fixed is None or self.kappa_n_fixed < 1):
            raise ValueError("fixed kappa_n_policy needs a positive kappa_n_fixed")
        if not -1.0 <= self.default_reputation <= 1.0:
            raise ValueError("default_reputation must be in [-1, 1]")

    @property
    def resolved_kappa_r(self) -> float:
        return self.kappa_s if self.kappa_r is None else self.kappa_r


@dataclass
class ReputationStore:
    """One node's view of its peers: last observed similarity per peer,
    trusted-until-observed for peers never exchanged with."""

    default: float = 1.0
    scores: dict[int, float] = field(default_factory=dict)

    def get(self, peer: int) -> float:
        return self.scores.get(peer, self.default)

    def known(self, peer: int) -> bool:
        return peer in self.scores


@dataclass(frozen=True)
class TriggerMessage:
    origin: int
    round_index: int
    offenders: tuple[tuple[int, float], ...]  # (peer id, similarity)

    def __post_init__(self):
        if len(self.offenders) == 0:
            raise ValueError("a trigger must name at least one offending peer")


@dataclass(frozen=True)
class EventRecord:
    round_index: int
    node: int
    event: str
    peer: int
    score: float | None = None


Recorder = Callable[[EventRecord], None]


def detect_anomaly(
    own: LayeredParams,
    received: list[tuple[int, LayeredParams]],
    kappa_s: float,
    *,
    origin: int,
    round_index: int,
    trigger_on_high: bool = False,
) -> TriggerMessage | None:
    """Compare the local model against each received model and flag peers
    whose similarity falls below kappa_s.

    Poisoned models score *low* (salt-poisoned ones near zero), so the trigger
    fires on s < kappa_s; trigger_on_high restores the inverted comparator for
    study runs.
    """
    offenders = []
    for peer_id, model in received:
        s = cosine_similarity_layerwise(own, model).value
        flagged = s >= kappa_s if trigger_on_high else s < kappa_s
        if flagged:
            offenders.append((peer_id, s))
    if not offenders:
        return None
    return TriggerMessage(origin=origin, round_index=round_index, offenders=tuple(offenders))


def update_reputation(
    store: ReputationStore,
    own: LayeredParams,
    exchanged: list[tuple[int, LayeredParams]],
) -> ReputationStore:
    """Overwrite each exchanged peer's score with the current similarity;
    peers outside the exchange keep their prior scores."""
    for peer_id, model in exchanged:
        store.scores[peer_id] = cosine_similarity_layerwise(own, model).value
    return store


def explore_neighbors(
    g: TopologyGraph,
    self_id: int,
    reputations: ReputationStore,
    kappa_n: int,
    kappa_r: float,
    *,
    recorder: Recorder | None = None,
    round_index: int = 0,
) -> list[int]:
    """Grow the neighbor list toward kappa_n members.

    Starts from the current neighbors and walks the growing list in admission
    order, scanning each member's neighbors in ascending id. A candidate is
    admitted iff it is new, not self, its reputation clears kappa_r, and the
    list is still below kappa_n. Newly admitted members are expanded too, so
    the walk is breadth-first over the reachable graph.
    """
    def record(event: str, peer: int, score: float | None) -> None:
        if recorder is not None:
            recorder(EventRecord(round_index, self_id, event, peer, score))

    members = g.neighbors(self_id)
    in_list = set(members)
    if len(members) >= kappa_n:
        return members
    cursor = 0
    while cursor < len(members):
        for candidate in g.neighbors(members[cursor]):
            if candidate == self_id or candidate in in_list:
                continue
            score = reputations.get(candidate)
            if score < kappa_r:
                record("reject_reputation", candidate, score)
                continue
            if len(members) >= kappa_n:
                record("reject_full", candidate, score)
                return members
            members.append(candidate)
            in_list.add(candidate)
            record("admit", candidate, score)
        cursor += 1
    if len(members) == len(g.neighbors(self_id)):
        logger.info("node %d found no admissible candidates to expand toward", self_id)
    return members


def deploy_connections(
    g: TopologyGraph,
    self_id: int,
    target: list[int],
    round_index: int,
    *,
    recorder: Recorder | None = None,
) -> list[int]:
    """Wire up every target member not already adjacent; returns the new
    neighbors in admission order. Connections persist for the rest of the run."""
    current = set(g.neighbors(self_id))
    if not current.issubset(target):
        raise ValueError("target neighbor list must include all current neighbors")
    new_peers = []
    for peer in target:
        if peer in current:
            continue
        add_edge(g, self_id, peer, round_index)
        new_peers.append(peer)
        if recorder is not None:
            recorder(EventRecord(round_index, self_id, "deploy", peer, None))
    return new_peers
