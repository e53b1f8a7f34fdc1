"""Synchronous round loop binding training, sharing, attacks, defense,
aggregation, and accounting into one deterministic run.

Each round: (1) every node trains locally, (2) model poisoners corrupt their
outgoing copy, (3) models go to all current neighbors, (4) with the MTD
aggregator, nodes refresh reputations, detect anomalies, and triggered nodes
explore and deploy new connections in ascending node-id order (single-writer),
(5) every node aggregates, (6) every node evaluates on its validation split.
All randomness derives from the master seed per (phase, node, round), so
reruns are bit-identical.

CPU cost is proxied by deterministic operation counters: one similarity op per
logical model comparison, one distance op per candidate pair scored by Krum.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

from . import aggregation
from .attacks import flip_labels, salt_poison, select_malicious
from .config import ScenarioConfig
from .exceptions import (
    DivergenceError,
    InsufficientCandidatesError,
    NeighborExpansionError,
    ProtocolViolationError,
)
from .learning import DataShard, evaluate, generate_task, init_params, local_train, partition_iid
from .params import LayeredParams, serialized_size_bytes
from .rng import sub_seed
from .topology import (
    TopologyGraph,
    build_topology,
    connection_threshold_kappa_n,
    f_estimate_for_degree,
)
from .voyager import (
    EventRecord,
    ReputationStore,
    TriggerMessage,
    deploy_connections,
    detect_anomaly,
    explore_neighbors,
    update_reputation,
)

logger = logging.getLogger(__name__)

BENIGN = "benign"
MALICIOUS = "malicious"


@dataclass
class NodeState:
    node_id: int
    role: str
    shard: DataShard
    train_shard: DataShard  # label-flipped copy for flip attackers, else the shard
    model: LayeredParams
    reputations: ReputationStore


@dataclass
class TrafficCounters:
    bytes_sent: int = 0
    bytes_received: int = 0
    sim_ops: int = 0
    dist_ops: int = 0


class TrafficLedger:
    """Double-entry per-node per-round accounting of bytes and compute ops."""

    def __init__(self):
        self.rows: dict[tuple[int, int], TrafficCounters] = {}

    def _row(self, round_index: int, node: int) -> TrafficCounters:
        return self.rows.setdefault((round_index, node), TrafficCounters())

    def account_message(
        self,
        round_index: int,
        src: int,
        dst: int,
        model: LayeredParams,
        graph: TopologyGraph,
    ) -> None:
        if not graph.has_edge(src, dst):
            raise ProtocolViolationError(f"send {src} -> {dst} without an edge in round {round_index}")
        size = serialized_size_bytes(model)
        self._row(round_index, src).bytes_sent += size
        self._row(round_index, dst).bytes_received += size

    def add_sim_ops(self, round_index: int, node: int, count: int) -> None:
        self._row(round_index, node).sim_ops += count

    def add_dist_ops(self, round_index: int, node: int, count: int) -> None:
        self._row(round_index, node).dist_ops += count

    def total_bytes_sent(self) -> int:
        return sum(c.bytes_sent for c in self.rows.values())

    def round_totals(self, round_index: int) -> TrafficCounters:
        total = TrafficCounters()
        for (r, _), c in self.rows.items():
            if r == round_index:
                total.bytes_sent += c.bytes_sent
                total.bytes_received += c.bytes_received
                total.sim_ops += c.sim_ops
                total.dist_ops += c.dist_ops
        return total


def account_message(
    ledger: TrafficLedger,
    src: int,
    dst: int,
    model: LayeredParams,
    *,
    round_index: int,
    graph: TopologyGraph,
) -> TrafficLedger:
    """Charge one model transfer to both endpoints; they must be adjacent."""
    ledger.account_message(round_index, src, dst, model, graph)
    return ledger


@dataclass
class RoundLog:
    round_index: int
    f1: dict[int, float]
    degree: dict[int, int]
    triggers: list[TriggerMessage]
    selections: dict[int, int]  # krum-family pick per node; own model is -1


@dataclass
class ProbeContext:
    """Read-only view handed to a probe callback at the end of each round."""

    round_index: int
    outgoing: dict[int, LayeredParams]
    aggregated: dict[int, LayeredParams]
    roles: dict[int, str]
    graph: TopologyGraph


@dataclass
class ScenarioResult:
    status: str  # "ok" or "error"
    error: str | None
    round_logs: list[RoundLog]
    ledger: TrafficLedger
    final_models: dict[int, LayeredParams]
    events: list[EventRecord]
    roles: dict[int, str]
    attackers: frozenset[int]
    resolved: dict

    def benign_nodes(self) -> list[int]:
        return sorted(i for i, role in self.roles.items() if role == BENIGN)

    def mean_benign_f1(self, round_index: int | None = None) -> float:
        """Mean macro-F1 over benign nodes; malicious metrics never count."""
        log = self.round_logs[-1] if round_index is None else next(
            rl for rl in self.round_logs if rl.round_index == round_index
        )
        benign = self.benign_nodes()
        return sum(log.f1[i] for i in benign) / len(benign)


class _Run:
    def __init__(self, cfg: ScenarioConfig):
        cfg_attack_seed = cfg.attack.seed
        self.cfg = cfg
        self.n = cfg.n_nodes
        self.alpha = cfg.alpha
        self.master = cfg.master_seed
        self.attack_seed = (
            cfg_attack_seed if cfg_attack_seed is not None else sub_seed(self.master, "attack")
        )
        self.events: list[EventRecord] = []
        self.ledger = TrafficLedger()
        self.round_logs: list[RoundLog] = []

        dataset = generate_task(cfg.task)
        shards = partition_iid(dataset, self.n, sub_seed(self.master, "partition"))
        self.attackers = select_malicious(
            self.n, cfg.attack.pnr_percent, self.attack_seed, protected=cfg.observation_node
        )
        self.graph = build_topology(cfg.topology, self.n, sub_seed(self.master, "topology"), cfg.random_p)
        self.initial_e_bar = self.graph.edges_per_node_bar

        kappa = None
        if cfg.voyager.kappa_n_policy == "fixed":
            kappa = cfg.voyager.kappa_n_fixed
        elif self.alpha > 0:
            kappa = connection_threshold_kappa_n(self.n, self.alpha, self.initial_e_bar).value
        self.kappa_n = kappa  # None: no expansion target (alpha 0), use current degree

        # All nodes start from one shared initial model (seeded by the master
        # seed): honest models then stay mutually close from round one, which
        # both the anomaly detector and Krum's distance geometry rely on.
        init_model = init_params(
            cfg.task.feature_dim,
            cfg.train.hidden_layers,
            cfg.task.num_classes,
            sub_seed(self.master, "model-init"),
        )
        self.states: list[NodeState] = []
        for i in range(self.n):
            role = MALICIOUS if i in self.attackers else BENIGN
            shard = shards[i]
            train_shard = shard
            if role == MALICIOUS and cfg.attack.kind == "label_flip":
                train_shard = flip_labels(shard, self.attack_seed)
            model = init_model
            self.states.append(
                NodeState(
                    node_id=i,
                    role=role,
                    shard=shard,
                    train_shard=train_shard,
                    model=model,
                    reputations=ReputationStore(default=cfg.voyager.default_reputation),
                )
            )

    def node_kappa_n(self, node: int) -> int:
        if self.kappa_n is None:
            return self.graph.degree(node)
        return self.kappa_n

    def resolved_manifest(self) -> dict:
        return {
            "attack_seed": self.attack_seed,
            "attackers": sorted(self.attackers),
            "initial_edges_per_node": self.initial_e_bar,
            "kappa_n": self.kappa_n,
            "kappa_r": self.cfg.voyager.resolved_kappa_r,
            "alpha": self.alpha,
        }

    def _exchange(self, a: int, b: int, outgoing: dict[int, LayeredParams], received, round_index: int) -> None:
        """Bidirectional model swap over a fresh edge, ledger-accounted."""
        self.ledger.account_message(round_index, a, b, outgoing[a], self.graph)
        self.ledger.account_message(round_index, b, a, outgoing[b], self.graph)
        received[a].append((b, outgoing[b]))
        received[b].append((a, outgoing[a]))
        update_reputation(self.states[a].reputations, self.states[a].model, [(b, outgoing[b])])
        update_reputation(self.states[b].reputations, self.states[b].model, [(a, outgoing[a])])
        self.ledger.add_sim_ops(round_index, a, 1)
        self.ledger.add_sim_ops(round_index, b, 1)

    def _voyager_aggregate(self, node: int, received, outgoing, round_index: int):
        st = self.states[node]
        f = f_estimate_for_degree(self.n, self.alpha, self.graph.degree(node))
        inp = aggregation.AggregationInput(st.model, tuple(received[node]), f)
        n_c = inp.candidate_count
        self.ledger.add_dist_ops(round_index, node, n_c * (n_c - 1) // 2)
        try:
            return aggregation.krum(inp)
        except InsufficientCandidatesError:
            pass
        # One extra exploration pass with the connection target bumped by one.
        target = explore_neighbors(
            self.graph,
            node,
            st.reputations,
            self.node_kappa_n(node) + 1,
            self.cfg.voyager.resolved_kappa_r,
            recorder=self.events.append,
            round_index=round_index,
        )
        for peer in deploy_connections(
            self.graph, node, target, round_index, recorder=self.events.append
        ):
            self._exchange(node, peer, outgoing, received, round_index)
        f = f_estimate_for_degree(self.n, self.alpha, self.graph.degree(node))
        inp = aggregation.AggregationInput(st.model, tuple(received[node]), f)
        n_c = inp.candidate_count
        self.ledger.add_dist_ops(round_index, node, n_c * (n_c - 1) // 2)
        try:
            return aggregation.krum(inp)
        except InsufficientCandidatesError as exc:
            raise NeighborExpansionError(
                f"node {node} still has {n_c} candidates for f={f} after expansion"
            ) from exc

    def _aggregate(self, node: int, received, outgoing, round_index: int, selections: dict) -> LayeredParams:
        cfg = self.cfg
        st = self.states[node]
        peers = tuple(received[node])
        if cfg.aggregator == "fedavg":
            return aggregation.fed_avg(aggregation.AggregationInput(st.model, peers))
        if cfg.aggregator == "trimmed_mean":
            return aggregation.trimmed_mean(
                aggregation.AggregationInput(st.model, peers), cfg.trim_fraction
            )
        if cfg.aggregator == "median":
            return aggregation.coordinate_median(aggregation.AggregationInput(st.model, peers))
        if cfg.aggregator == "fltrust":
            self.ledger.add_sim_ops(round_index, node, len(peers))
            return aggregation.fltrust_local_anchor(aggregation.AggregationInput(st.model, peers))
        if cfg.aggregator == "krum":
            f = f_estimate_for_degree(self.n, self.alpha, self.graph.degree(node))
            inp = aggregation.AggregationInput(st.model, peers, f)
            n_c = inp.candidate_count
            self.ledger.add_dist_ops(round_index, node, n_c * (n_c - 1) // 2)
            model, selected = aggregation.krum_static(inp)
            selections[node] = selected
            return model
        model, selected = self._voyager_aggregate(node, received, outgoing, round_index)
        selections[node] = selected
        return model

    def run(self, probe: Callable[[ProbeContext], None] | None = None) -> ScenarioResult:
        cfg = self.cfg
        error: str | None = None
        try:
            for round_index in range(1, cfg.rounds + 1):
                self._run_round(round_index, probe)
            status = "ok"
        except (DivergenceError, NeighborExpansionError) as exc:
            logger.error("run aborted in round %d: %s", len(self.round_logs) + 1, exc)
            status, error = "error", str(exc)
        return ScenarioResult(
            status=status,
            error=error,
            round_logs=self.round_logs,
            ledger=self.ledger,
            final_models={st.node_id: st.model for st in self.states},
            events=self.events,
            roles={st.node_id: st.role for st in self.states},
            attackers=self.attackers,
            resolved=self.resolved_manifest(),
        )

    def _run_round(self, round_index: int, probe) -> None:
        cfg = self.cfg
        # (1) local training
        for st in self.states:
            st.model = local_train(
                st.model, st.train_shard, cfg.train, sub_seed(self.master, "train", st.node_id, round_index)
            )
        # (2) outgoing copies; model poisoners corrupt theirs
        outgoing: dict[int, LayeredParams] = {}
        for st in self.states:
            model = st.model
            if st.role == MALICIOUS and cfg.attack.kind == "model_poison":
                model = salt_poison(
                    model,
                    cfg.attack.salt_fraction,
                    sub_seed(self.attack_seed, "salt", st.node_id, round_index),
                )
            outgoing[st.node_id] = model
        # (3) share with all current neighbors
        received: dict[int, list[tuple[int, LayeredParams]]] = {i: [] for i in range(self.n)}
        for i, j in self.graph.edges():
            self.ledger.account_message(round_index, i, j, outgoing[i], self.graph)
            self.ledger.account_message(round_index, j, i, outgoing[j], self.graph)
            received[j].append((i, outgoing[i]))
            received[i].append((j, outgoing[j]))
        # (4) defense: refresh reputations, detect, then expand in id order
        triggers: list[TriggerMessage] = []
        if cfg.aggregator == "voyager":
            fired: dict[int, TriggerMessage] = {}
            for st in self.states:
                update_reputation(st.reputations, st.model, received[st.node_id])
                self.ledger.add_sim_ops(round_index, st.node_id, len(received[st.node_id]))
                message = detect_anomaly(
                    st.model,
                    received[st.node_id],
                    cfg.voyager.kappa_s,
                    origin=st.node_id,
                    round_index=round_index,
                    trigger_on_high=cfg.voyager.trigger_on_high,
                )
                if message is not None:
                    fired[st.node_id] = message
                    for peer, score in message.offenders:
                        self.events.append(EventRecord(round_index, st.node_id, "trigger", peer, score))
            triggers = [fired[i] for i in sorted(fired)]
            for node in sorted(fired):
                target = explore_neighbors(
                    self.graph,
                    node,
                    self.states[node].reputations,
                    self.node_kappa_n(node),
                    cfg.voyager.resolved_kappa_r,
                    recorder=self.events.append,
                    round_index=round_index,
                )
                for peer in deploy_connections(
                    self.graph, node, target, round_index, recorder=self.events.append
                ):
                    self._exchange(node, peer, outgoing, received, round_index)
        # (5) aggregate
        selections: dict[int, int] = {}
        for st in self.states:
            st.model = self._aggregate(st.node_id, received, outgoing, round_index, selections)
        # (6) evaluate on each node's own validation split
        f1 = {st.node_id: evaluate(st.model, st.shard).macro_f1 for st in self.states}
        degree = {i: self.graph.degree(i) for i in range(self.n)}
        self.round_logs.append(RoundLog(round_index, f1, degree, triggers, selections))
        if probe is not None:
            probe(
                ProbeContext(
                    round_index=round_index,
                    outgoing=outgoing,
                    aggregated={st.node_id: st.model for st in self.states},
                    roles={st.node_id: st.role for st in self.states},
                    graph=self.graph,
                )
            )


def run_scenario(
    cfg: ScenarioConfig, probe: Callable[[ProbeContext], None] | None = None
) -> ScenarioResult:
    """Execute one scenario; fully deterministic per master seed.

    A trainer divergence or a failed neighbor expansion aborts the run and
    returns a partial result with status "error".
    """
    return _Run(cfg).run(probe)
