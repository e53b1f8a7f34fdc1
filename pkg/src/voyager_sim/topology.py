"""Participant graphs and the analytic risk model.

The number of malicious peers a node connects to is hypergeometric: drawing
``degree`` neighbors without replacement from ``n - 1`` peers of which
``round(alpha * n)`` are malicious. ``edges_per_node_bar`` (|E|/N) is the
average edges per node, so a node's expected degree is twice that.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

from .exceptions import GenerationFailureError
from .rng import make_rng

logger = logging.getLogger(__name__)

TOPOLOGY_KINDS = ("ring", "star", "random", "full")

MAX_RANDOM_RESAMPLES = 1000


@dataclass
class TopologyGraph:
    """Undirected participant graph over node ids 0..n-1 with a mutation log."""

    n_nodes: int
    adjacency: list[set[int]]
    mutation_log: list[tuple[int, int, int]] = field(default_factory=list)

    def neighbors(self, i: int) -> list[int]:
        return sorted(self.adjacency[i])

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    def has_edge(self, i: int, j: int) -> bool:
        return j in self.adjacency[i]

    def edges(self) -> list[tuple[int, int]]:
        return sorted((i, j) for i in range(self.n_nodes) for j in self.adjacency[i] if i < j)

    @property
    def edge_count(self) -> int:
        return sum(len(adj) for adj in self.adjacency) // 2

    @property
    def edges_per_node_bar(self) -> float:
        return self.edge_count / self.n_nodes

    def is_connected(self) -> bool:
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in self.adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.n_nodes

    def copy(self) -> "TopologyGraph":
        return TopologyGraph(
            self.n_nodes, [set(adj) for adj in self.adjacency], list(self.mutation_log)
        )


def _empty(n: int) -> TopologyGraph:
    return TopologyGraph(n, [set() for _ in range(n)])


def _link(g: TopologyGraph, i: int, j: int) -> None:
    g.adjacency[i].add(j)
    g.adjacency[j].add(i)


def build_topology(kind: str, n: int, seed: int, random_p: float = 0.3) -> TopologyGraph:
    """Build one of the four supported topologies, deterministic per seed.

    random: Erdos-Renyi G(n, p), resampled with a fresh derived seed until
    connected (at most MAX_RANDOM_RESAMPLES attempts).
    """
    if n < 3:
        raise ValueError(f"need at least 3 nodes, got {n}")
    if kind == "ring":
        g = _empty(n)
        for i in range(n):
            _link(g, i, (i + 1) % n)
        return g
    if kind == "star":
        g = _empty(n)
        for i in range(1, n):
            _link(g, 0, i)
        return g
    if kind == "full":
        g = _empty(n)
        for i in range(n):
            for j in range(i + 1, n):
                _link(g, i, j)
        return g
    if kind == "random":
        if not 0.0 < random_p <= 1.0:
            raise ValueError(f"random_p must be in (0, 1], got {random_p}")
        for attempt in range(MAX_RANDOM_RESAMPLES):
            rng = make_rng(seed, "erdos-renyi", attempt)
            g = _empty(n)
            for i in range(n):
                for j in range(i + 1, n):
                    if rng.random() < random_p:
                        _link(g, i, j)
            if g.is_connected():
                return g
        raise GenerationFailureError(
            f"no connected G({n}, {random_p}) after {MAX_RANDOM_RESAMPLES} resamples"
        )
    raise ValueError(f"unknown topology kind {kind!r}, expected one of {TOPOLOGY_KINDS}")


def add_edge(g: TopologyGraph, i: int, j: int, round_index: int) -> TopologyGraph:
    """Add the undirected edge (i, j), stamping the mutation log.

    Re-adding an existing edge is an idempotent no-op (logged); self-loops are
    rejected.
    """
    if i == j:
        raise ValueError(f"self-loop on node {i}")
    if not (0 <= i < g.n_nodes and 0 <= j < g.n_nodes):
        raise ValueError(f"edge ({i}, {j}) outside node range 0..{g.n_nodes - 1}")
    if g.has_edge(i, j):
        logger.warning("edge (%d, %d) already present, ignoring", i, j)
        return g
    _link(g, i, j)
    g.mutation_log.append((round_index, min(i, j), max(i, j)))
    return g


def _malicious_count(n: int, alpha: float) -> int:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    m = round(alpha * n)
    if m > n - 1:
        raise ValueError(f"alpha * n = {alpha * n} leaves no benign observer")
    return m


def malicious_connection_pmf(n: int, alpha: float, degree: int) -> dict[int, float]:
    """P(k malicious among ``degree`` neighbors drawn from n-1 peers).

    The malicious population is round(alpha * n). Keys cover the full support
    max(0, degree-(n-1-M)) .. min(M, degree).
    """
    if not 0 <= degree <= n - 1:
        raise ValueError(f"degree must be in [0, {n - 1}], got {degree}")
    m = _malicious_count(n, alpha)
    benign = n - 1 - m
    denom = math.comb(n - 1, degree)
    lo = max(0, degree - benign)
    hi = min(m, degree)
    return {k: math.comb(m, k) * math.comb(benign, degree - k) / denom for k in range(lo, hi + 1)}


def expected_malicious(n: int, alpha: float, edges_per_node_bar: float) -> float:
    """Mean number of malicious peers among 2*e_bar expected connections."""
    _malicious_count(n, alpha)
    return 2.0 * edges_per_node_bar * alpha * n / (n - 1)


def node_risk(n: int, alpha: float, edges_per_node_bar: float, degree_i: int) -> float:
    """Per-node risk: expected malicious connections diluted by actual degree."""
    if degree_i < 1:
        raise ValueError(f"node is isolated (degree {degree_i})")
    return expected_malicious(n, alpha, edges_per_node_bar) / degree_i


@dataclass(frozen=True)
class KappaThreshold:
    """Connection target for neighbor expansion; saturated when clamped to n-1."""

    value: int
    saturated: bool = False


def connection_threshold_kappa_n(n: int, alpha: float, edges_per_node_bar: float) -> KappaThreshold:
    """Smallest neighbor count keeping the expected malicious fraction within
    Krum's tolerance: ceil(4 * e_bar * alpha * n / (n-1) + 2), clamped to n-1.

    Rounding up never violates the safety condition
    expected_malicious / kappa <= (kappa - 2) / (2 * kappa); rounding down can.
    """
    _malicious_count(n, alpha)
    raw = 4.0 * edges_per_node_bar * alpha * n / (n - 1) + 2.0
    kappa = math.ceil(raw - 1e-12)
    if kappa > n - 1:
        logger.warning("kappa_n %d exceeds peer count, clamping to %d", kappa, n - 1)
        return KappaThreshold(n - 1, saturated=True)
    return KappaThreshold(kappa, saturated=False)


def f_estimate_for_degree(n: int, alpha: float, degree: int) -> int:
    """Byzantine-count estimate for a node: the hypergeometric mean at its
    degree, rounded. Matches expected_malicious when degree equals 2*e_bar."""
    if degree <= 0:
        return 0
    return round(degree * alpha * n / (n - 1))


@dataclass(frozen=True)
class RiskProfile:
    """Analytic risk summary for one graph and attacker ratio.

    Both the average edges per node and the derived draw count are reported,
    since the pmf needs an integral number of draws.
    """

    n_nodes: int
    alpha: float
    edges_per_node_bar: float
    draw_count: int
    pmf: dict[int, float]
    expected_malicious: float
    per_node_risk: list[float]


def build_risk_profile(g: TopologyGraph, alpha: float) -> RiskProfile:
    e_bar = g.edges_per_node_bar
    draws = round(2.0 * e_bar)
    pmf = malicious_connection_pmf(g.n_nodes, alpha, draws)
    total = sum(pmf.values())
    if abs(total - 1.0) > 1e-9:
        raise AssertionError(f"pmf sums to {total}")
    expected = expected_malicious(g.n_nodes, alpha, e_bar)
    risks = [node_risk(g.n_nodes, alpha, e_bar, g.degree(i)) for i in range(g.n_nodes)]
    return RiskProfile(
        n_nodes=g.n_nodes,
        alpha=alpha,
        edges_per_node_bar=e_bar,
        draw_count=draws,
        pmf=pmf,
        expected_malicious=expected,
        per_node_risk=risks,
    )


def write_edge_list(g: TopologyGraph, path) -> None:
    """One "i j" pair per line, i < j, sorted."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in g.edges():
            fh.write(f"{i} {j}\n")


def write_mutation_log(g: TopologyGraph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "node_a", "node_b"])
        for round_index, a, b in g.mutation_log:
            writer.writerow([round_index, a, b])
