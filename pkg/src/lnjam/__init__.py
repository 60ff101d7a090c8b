"""Planning and verification toolkit for HTLC-congestion attacks.

Ingests payment-channel network snapshots, infers which implementation
each node runs from its announced policies, plans slot-exhaustion attacks
(network-wide capacity lockup, connectivity cuts, single-node isolation),
prices them, and replays them on an embedded deterministic simulator.
"""

from .cost import CostReport, estimate_costs, price_plan
from .inference import score_node, split_by_slot_class, tag_nodes
from .isolation import IsolationPlan, isolation_cost_curve, plan_isolation
from .partition import (
    DisconnectionMethod,
    connected_pairs_fraction,
    edge_betweenness,
    plan_disconnection,
)
from .planner import (
    AttackPlan,
    AttackRoute,
    PlannerConfig,
    choose_routes,
    plan_network_attack,
    upper_bound_capacity,
)
from .simulator import SimNetwork, execute_plan, run_scenario
from .topology import (
    MAINNET_DEFAULTS,
    ImplLabel,
    NetworkGraph,
    Snapshot,
    apply_slot_limits,
    build_graph,
    parameter_histogram,
    parse_snapshot,
)

__version__ = "0.1.0"

__all__ = [
    "AttackPlan",
    "AttackRoute",
    "CostReport",
    "DisconnectionMethod",
    "ImplLabel",
    "IsolationPlan",
    "MAINNET_DEFAULTS",
    "NetworkGraph",
    "PlannerConfig",
    "SimNetwork",
    "Snapshot",
    "apply_slot_limits",
    "build_graph",
    "choose_routes",
    "connected_pairs_fraction",
    "edge_betweenness",
    "estimate_costs",
    "execute_plan",
    "isolation_cost_curve",
    "parameter_histogram",
    "parse_snapshot",
    "plan_disconnection",
    "plan_isolation",
    "plan_network_attack",
    "price_plan",
    "run_scenario",
    "score_node",
    "split_by_slot_class",
    "tag_nodes",
    "upper_bound_capacity",
]
