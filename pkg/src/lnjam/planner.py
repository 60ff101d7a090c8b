"""Greedy planning of slot-exhaustion routes over a channel graph.

A single malicious payment that is accepted but never settled pins one HTLC
slot on every channel it crosses until its locktime runs out. The planner
partitions the target channels into attacker routes: each route is a
connected walk of distinct channels, entered and exited through two channels
the attacker opens, such that the sum of forwarding deltas along the walk
still leaves at least ``tau_min`` blocks of lock time under the 2016-block
ceiling. Filling every channel of a route to its HTLC slot limit then needs
only ``slot_class`` payments and two attacker channels.

Routes are chosen greedily by weight (channel capacity, or edge betweenness
for connectivity attacks), heaviest first, always extending at the head
while the locktime budget allows.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .inference import split_by_slot_class
from .topology import (
    MAINNET_DEFAULTS,
    DefaultsTable,
    ImplLabel,
    NetworkGraph,
    apply_slot_limits,
)

logger = logging.getLogger(__name__)

# Longest permitted payment route, in channels (BOLT onion limit).
MAX_ROUTE_HOPS = 20

# Blocks per day, for converting lock periods to tau_min.
BLOCKS_PER_DAY = 144


class MixedSlotClassError(ValueError):
    """choose_routes needs all channels to share one slot limit."""


class InfeasibleConfigError(ValueError):
    """A sweep or budget parameter leaves no room for any attack."""


class WeightMode(Enum):
    CAPACITY = "capacity"
    BETWEENNESS = "betweenness"


class RecomputeMode(Enum):
    ONCE = "once"
    PER_ROUTE = "per-route"


@dataclass(frozen=True)
class PlannerConfig:
    """Knobs for route selection.

    Attributes:
        tau_min: minimum acceptable lock duration, blocks (default three days).
        max_route_channels: victim channels per route; the onion limit of 20
            minus the attacker's entry and exit hops.
        locktime_max: ceiling on total route locktime, blocks.
        weight_mode: channel ordering criterion.
        betweenness_recompute: whether betweenness weights are refreshed on
            the residual graph before each route.
    """

    tau_min: int = 432
    max_route_channels: int = 18
    locktime_max: int = 2016
    weight_mode: WeightMode = WeightMode.CAPACITY
    betweenness_recompute: RecomputeMode = RecomputeMode.PER_ROUTE

    def __post_init__(self):
        if not 0 < self.tau_min < self.locktime_max:
            raise InfeasibleConfigError(
                f"tau_min must be in (0, {self.locktime_max}), got {self.tau_min}"
            )
        if not 1 <= self.max_route_channels <= MAX_ROUTE_HOPS - 2:
            raise InfeasibleConfigError(
                f"max_route_channels must be in [1, {MAX_ROUTE_HOPS - 2}],"
                f" got {self.max_route_channels}"
            )


@dataclass(frozen=True)
class RouteHop:
    channel_id: str
    from_node: str
    to_node: str


@dataclass
class AttackRoute:
    """One walk of victim channels plus derived locking facts.

    ``timeout_sum`` is the total forwarding delta charged along the walk
    (the attacker's own entry/exit hops charge zero); the payments stay
    pending for ``lock_duration = locktime_max - timeout_sum`` blocks.
    ``payment_amount_msat`` is filled in by the cost model when a plan is
    priced.
    """

    hops: tuple[RouteHop, ...]
    timeout_sum: int
    lock_duration: int
    weight: float
    slot_class: int
    capacity_sat: int
    payment_amount_msat: int | None = None

    @property
    def channel_ids(self) -> tuple[str, ...]:
        return tuple(h.channel_id for h in self.hops)

    @property
    def n_channels(self) -> int:
        return len(self.hops)

    @property
    def node_sequence(self) -> tuple[str, ...]:
        return (self.hops[0].from_node,) + tuple(h.to_node for h in self.hops)


@dataclass
class AttackPlan:
    """Ordered attack routes plus coverage bookkeeping."""

    routes: list[AttackRoute]
    total_capacity_sat: int
    tau_min: int
    uncovered_channel_ids: tuple[str, ...] = ()

    @property
    def attacker_channels(self) -> int:
        return 2 * len(self.routes)

    @property
    def locked_capacity_sat(self) -> int:
        return sum(r.capacity_sat for r in self.routes)

    @property
    def locked_capacity_fraction(self) -> float:
        if self.total_capacity_sat == 0:
            return 0.0
        return self.locked_capacity_sat / self.total_capacity_sat

    def cumulative_rows(self) -> list[dict]:
        """One row per route: weight, size, locktimes, cumulative coverage."""
        rows = []
        cum_cap = 0
        for i, r in enumerate(self.routes, start=1):
            cum_cap += r.capacity_sat
            rows.append(
                {
                    "route_index": i,
                    "weight": r.weight,
                    "n_channels": r.n_channels,
                    "timeout_sum": r.timeout_sum,
                    "lock_duration": r.lock_duration,
                    "capacity_sat": r.capacity_sat,
                    "cumulative_attacker_channels": 2 * i,
                    "cumulative_capacity_fraction": (
                        cum_cap / self.total_capacity_sat if self.total_capacity_sat else 0.0
                    ),
                }
            )
        return rows

    def to_json_dict(self) -> dict:
        return {
            "kind": "network-attack",
            "tau_min": self.tau_min,
            "total_capacity_sat": self.total_capacity_sat,
            "uncovered_channel_ids": list(self.uncovered_channel_ids),
            "routes": [
                {
                    "hops": [
                        {"channel_id": h.channel_id, "from": h.from_node, "to": h.to_node}
                        for h in r.hops
                    ],
                    "timeout_sum": r.timeout_sum,
                    "lock_duration": r.lock_duration,
                    "weight": r.weight,
                    "slot_class": r.slot_class,
                    "capacity_sat": r.capacity_sat,
                    "payment_amount_msat": r.payment_amount_msat,
                }
                for r in self.routes
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "AttackPlan":
        if doc.get("kind") != "network-attack":
            raise ValueError(f"not a network attack plan: kind={doc.get('kind')!r}")
        routes = [
            AttackRoute(
                hops=tuple(
                    RouteHop(h["channel_id"], h["from"], h["to"]) for h in r["hops"]
                ),
                timeout_sum=int(r["timeout_sum"]),
                lock_duration=int(r["lock_duration"]),
                weight=float(r["weight"]),
                slot_class=int(r["slot_class"]),
                capacity_sat=int(r["capacity_sat"]),
                payment_amount_msat=(
                    None
                    if r.get("payment_amount_msat") is None
                    else int(r["payment_amount_msat"])
                ),
            )
            for r in doc["routes"]
        ]
        return cls(
            routes=routes,
            total_capacity_sat=int(doc["total_capacity_sat"]),
            tau_min=int(doc["tau_min"]),
            uncovered_channel_ids=tuple(doc.get("uncovered_channel_ids", ())),
        )


def can_extend_route(
    candidate_delta: int, route_timeout_sum: int, config: PlannerConfig
) -> bool:
    """Does adding a hop with this forwarding delta keep the route usable?

    The extended route must still lock payments for at least ``tau_min``
    blocks under the ``locktime_max`` ceiling.
    """
    return candidate_delta <= config.locktime_max - config.tau_min - route_timeout_sum


def _channel_weights(graph: NetworkGraph, config: PlannerConfig) -> dict[str, float]:
    if config.weight_mode is WeightMode.CAPACITY:
        return {ch.channel_id: float(ch.capacity_sat) for ch in graph.channels()}
    # Imported here: partition pulls this module in at import time for
    # plan_disconnection, so the reverse dependency has to stay lazy.
    from .partition import edge_betweenness

    return edge_betweenness(graph)


def choose_routes(
    graph: NetworkGraph,
    config: PlannerConfig = PlannerConfig(),
    weights: Mapping[str, float] | None = None,
) -> list[AttackRoute]:
    """Partition a uniform-slot-class graph into attack routes.

    Channels whose best-direction delta already exceeds the locktime budget
    cannot appear on any route and are skipped (callers can diff against the
    graph to report them). Everything else lands on exactly one route.

    Args:
        graph: channels to cover; every ``slot_limit`` must be set and equal.
        config: locktime and ordering knobs.
        weights: optional channel weights overriding ``config.weight_mode``.

    Returns:
        Routes in selection order (heaviest seed first).
    """
    if len(graph) == 0:
        return []
    classes = {ch.slot_limit for ch in graph.channels()}
    if None in classes:
        raise MixedSlotClassError("slot limits missing; run apply_slot_limits first")
    if len(classes) != 1:
        raise MixedSlotClassError(f"multiple slot classes in one planning pass: {sorted(classes)}")
    slot_class = classes.pop()

    budget = config.locktime_max - config.tau_min
    remaining = {
        ch.channel_id for ch in graph.channels() if ch.min_delta <= budget
    }
    dropped = len(graph) - len(remaining)
    if dropped:
        logger.info("%d channels exceed the locktime budget and are skipped", dropped)

    recompute = (
        config.weight_mode is WeightMode.BETWEENNESS
        and config.betweenness_recompute is RecomputeMode.PER_ROUTE
        and weights is None
    )
    w: Mapping[str, float] = (
        weights if weights is not None else _channel_weights(graph, config)
    )

    routes: list[AttackRoute] = []
    while remaining:
        if recompute:
            w = _channel_weights(graph.subgraph(remaining), config)

        def seed_key(cid: str):
            ch = graph.channel(cid)
            return (-w.get(cid, 0.0), ch.min_delta, cid)

        seed_id = min(remaining, key=seed_key)
        remaining.discard(seed_id)
        seed = graph.channel(seed_id)

        # Traverse the cheaper direction so the larger delta is announced by
        # the node the route leaves behind.
        d_fwd = seed.policy_a_to_b.cltv_expiry_delta
        d_rev = seed.policy_b_to_a.cltv_expiry_delta
        if d_rev < d_fwd:
            start, charged = seed.endpoint_b, d_rev
        else:
            start, charged = seed.endpoint_a, d_fwd
        head = seed.other_endpoint(start)
        hops = [RouteHop(seed_id, start, head)]
        timeout = charged

        while len(hops) < config.max_route_channels:
            best_id = None
            best_key = None
            best_charged = 0
            for cid in graph.channels_of(head):
                if cid not in remaining:
                    continue
                ch = graph.channel(cid)
                hop_delta = ch.delta_from(head)
                if not can_extend_route(hop_delta, timeout, config):
                    continue
                key = (-w.get(cid, 0.0), hop_delta, cid)
                if best_key is None or key < best_key:
                    best_id, best_key, best_charged = cid, key, hop_delta
            if best_id is None:
                break
            remaining.discard(best_id)
            nxt = graph.channel(best_id).other_endpoint(head)
            hops.append(RouteHop(best_id, head, nxt))
            timeout += best_charged
            head = nxt

        routes.append(
            AttackRoute(
                hops=tuple(hops),
                timeout_sum=timeout,
                lock_duration=config.locktime_max - timeout,
                weight=sum(w.get(h.channel_id, 0.0) for h in hops),
                slot_class=slot_class,
                capacity_sat=sum(graph.channel(h.channel_id).capacity_sat for h in hops),
            )
        )
    return routes


def _ensure_slot_limits(
    graph: NetworkGraph, labels: Mapping[str, ImplLabel], defaults: DefaultsTable
) -> NetworkGraph:
    if any(ch.slot_limit is None for ch in graph.channels()):
        return apply_slot_limits(graph, labels, defaults)
    return graph


def plan_network_attack(
    graph: NetworkGraph,
    labels: Mapping[str, ImplLabel],
    defaults: DefaultsTable = MAINNET_DEFAULTS,
    config: PlannerConfig = PlannerConfig(),
    budget_channels: int | None = None,
) -> AttackPlan:
    """Plan a capacity-locking attack over the whole graph.

    Channels are planned per slot class (483-slot LND-only channels
    separately from 30-slot ones) so each route needs a single payment count.
    Routes are then ranked by weight and truncated to the attacker-channel
    budget: each route costs two channels.

    Args:
        budget_channels: attacker channels available; None means unlimited.
    """
    if budget_channels is not None and budget_channels < 2:
        raise InfeasibleConfigError(
            f"budget of {budget_channels} attacker channels cannot fund a route"
        )
    graph = _ensure_slot_limits(graph, labels, defaults)
    lnd_only, mixed = split_by_slot_class(graph, labels)
    routes: list[AttackRoute] = []
    for sub in (lnd_only, mixed):
        if len(sub):
            routes.extend(choose_routes(sub, config))
    routes.sort(key=lambda r: (-r.weight, r.hops[0].channel_id))
    if budget_channels is not None:
        routes = routes[: budget_channels // 2]
    covered = {h.channel_id for r in routes for h in r.hops}
    uncovered = tuple(sorted(set(graph.channel_ids) - covered))
    plan = AttackPlan(
        routes=routes,
        total_capacity_sat=graph.total_capacity_sat,
        tau_min=config.tau_min,
        uncovered_channel_ids=uncovered,
    )
    logger.info(
        "planned %d routes (%d attacker channels), locking %.1f%% of capacity",
        len(routes),
        plan.attacker_channels,
        100 * plan.locked_capacity_fraction,
    )
    return plan


def upper_bound_capacity(
    graph: NetworkGraph,
    budget_channels: int,
    max_route_channels: int = MAX_ROUTE_HOPS - 2,
) -> float:
    """Capacity fraction no plan under this budget can beat.

    With ``budget_channels // 2`` routes of at most ``max_route_channels``
    channels each, the locked capacity is at most the sum of the largest
    ``routes * max_route_channels`` capacities, whatever the topology.
    """
    if budget_channels < 2:
        raise InfeasibleConfigError(
            f"budget of {budget_channels} attacker channels cannot fund a route"
        )
    total = graph.total_capacity_sat
    if total == 0:
        return 0.0
    caps = sorted((ch.capacity_sat for ch in graph.channels()), reverse=True)
    top = caps[: (budget_channels // 2) * max_route_channels]
    return min(1.0, sum(top) / total)


def lock_period_sweep(
    graph: NetworkGraph,
    labels: Mapping[str, ImplLabel],
    days: Sequence[float],
    defaults: DefaultsTable = MAINNET_DEFAULTS,
    config: PlannerConfig = PlannerConfig(),
    budget_channels: int | None = None,
) -> list[tuple[float, AttackPlan]]:
    """Re-plan the attack for a range of minimum lock periods, in days.

    Each ``d`` maps to ``tau_min = ceil(144 * d)``. Days of 14 or more leave
    no locktime budget at all (144 * 14 = 2016) and raise
    :class:`InfeasibleConfigError`.
    """
    plans = []
    for d in days:
        if d <= 0 or d >= 14:
            raise InfeasibleConfigError(f"lock period of {d} days is outside (0, 14)")
        cfg = PlannerConfig(
            tau_min=math.ceil(BLOCKS_PER_DAY * d),
            max_route_channels=config.max_route_channels,
            locktime_max=config.locktime_max,
            weight_mode=config.weight_mode,
            betweenness_recompute=config.betweenness_recompute,
        )
        plans.append((d, plan_network_attack(graph, labels, defaults, cfg, budget_channels)))
    return plans


def route_length_sweep(
    graph: NetworkGraph,
    labels: Mapping[str, ImplLabel],
    max_hops: Sequence[int],
    defaults: DefaultsTable = MAINNET_DEFAULTS,
    config: PlannerConfig = PlannerConfig(),
    budget_channels: int | None = None,
) -> list[tuple[int, AttackPlan]]:
    """Re-plan under different total route-length limits (in hops).

    A limit of ``h`` hops leaves ``h - 2`` victim channels per route after
    the attacker's entry and exit. Limits outside [3, 20] are rejected.
    """
    plans = []
    for limit in max_hops:
        if not 3 <= limit <= MAX_ROUTE_HOPS:
            raise InfeasibleConfigError(
                f"route length limit {limit} outside [3, {MAX_ROUTE_HOPS}]"
            )
        cfg = PlannerConfig(
            tau_min=config.tau_min,
            max_route_channels=limit - 2,
            locktime_max=config.locktime_max,
            weight_mode=config.weight_mode,
            betweenness_recompute=config.betweenness_recompute,
        )
        plans.append((limit, plan_network_attack(graph, labels, defaults, cfg, budget_channels)))
    return plans
