"""Deterministic simulator for decentralized federated learning under
poisoning attacks: topology risk analysis, robust baseline aggregators, and
the Voyager MTD aggregation protocol."""

from .aggregation import (
    AggregationInput,
    coordinate_median,
    fed_avg,
    fltrust_local_anchor,
    krum,
    krum_static,
    trimmed_mean,
)
from .attacks import AttackConfig, flip_labels, salt_poison, select_malicious
from .config import AGGREGATORS, ScenarioConfig
from .engine import ScenarioResult, TrafficLedger, account_message, run_scenario
from .learning import (
    DataShard,
    Dataset,
    EvalMetrics,
    SyntheticTask,
    TrainConfig,
    evaluate,
    generate_task,
    init_params,
    local_train,
    partition_iid,
)
from .params import (
    LayeredParams,
    SimilarityScore,
    cosine_similarity_layerwise,
    linear_combine,
    pairwise_sq_distance,
    serialized_size_bytes,
)
from .topology import (
    RiskProfile,
    TopologyGraph,
    add_edge,
    build_risk_profile,
    build_topology,
    connection_threshold_kappa_n,
    expected_malicious,
    malicious_connection_pmf,
    node_risk,
)
from .voyager import (
    ReputationStore,
    TriggerMessage,
    VoyagerConfig,
    deploy_connections,
    detect_anomaly,
    explore_neighbors,
    update_reputation,
)

__version__ = "0.1.0"
