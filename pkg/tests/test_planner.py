"""Greedy route selection under the locktime budget."""

import pytest

from lnjam.planner import (
    AttackPlan,
    InfeasibleConfigError,
    MixedSlotClassError,
    PlannerConfig,
    WeightMode,
    can_extend_route,
    choose_routes,
    lock_period_sweep,
    plan_network_attack,
    route_length_sweep,
    upper_bound_capacity,
)
from lnjam.topology import (
    MAINNET_DEFAULTS,
    ImplLabel,
    apply_slot_limits,
    build_graph,
    parse_snapshot,
)
from lnjam.inference import tag_nodes

import netgen

LND = netgen.DEFAULTS_BY_NAME["lnd"]


def _lnd_graph(snapshot):
    """Slot-limited graph treating every node as LND, whatever it announces."""
    graph = build_graph(snapshot)
    labels = {n: ImplLabel.LND for n in graph.nodes}
    return apply_slot_limits(graph, labels, MAINNET_DEFAULTS), labels


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(tau_min=0)
    with pytest.raises(ValueError):
        PlannerConfig(tau_min=2016)
    with pytest.raises(ValueError):
        PlannerConfig(max_route_channels=0)
    with pytest.raises(ValueError):
        PlannerConfig(max_route_channels=19)


def test_can_extend_route_budget_boundary():
    config = PlannerConfig(tau_min=432)
    assert can_extend_route(84, 1500, config)
    assert not can_extend_route(85, 1500, config)


def test_two_channel_line_becomes_one_route():
    snapshot = netgen.line_snapshot([40, 40], capacities=[10_000_000, 5_000_000])
    graph, _ = _lnd_graph(snapshot)
    routes = choose_routes(graph)
    assert len(routes) == 1
    assert routes[0].channel_ids == ("e00", "e01")
    assert routes[0].timeout_sum == 80
    assert routes[0].lock_duration == 1936
    assert routes[0].node_sequence == ("n00", "n01", "n02")
    assert routes[0].slot_class == 483


def test_seed_orients_toward_cheaper_first_hop():
    """The walk starts on the side whose first traversal charges less."""
    raw = netgen.snapshot_json(
        ["x", "y", "z"],
        [
            netgen.channel_json(
                "c1", "x", "y", 10_000_000,
                netgen.policy_json(LND, time_lock_delta=144),
                netgen.policy_json(LND, time_lock_delta=40),
            ),
            netgen.channel_json(
                "c2", "y", "z", 5_000_000,
                netgen.policy_json(LND), netgen.policy_json(LND),
            ),
        ],
    )
    graph, _ = _lnd_graph(parse_snapshot(raw))
    routes = choose_routes(graph)
    # c1 seeds first (heavier) and is walked y -> x, charging 40 not 144.
    assert routes[0].channel_ids == ("c1",)
    assert routes[0].hops[0].from_node == "y"
    assert routes[0].timeout_sum == 40
    # x is a dead end, so c2 forms its own route.
    assert routes[1].channel_ids == ("c2",)


def test_extension_prefers_cheaper_delta_on_weight_ties():
    raw = netgen.snapshot_json(
        ["a", "h", "b", "c"],
        [
            netgen.channel_json(
                "c0", "a", "h", 10_000_000,
                netgen.policy_json(LND), netgen.policy_json(LND),
            ),
            netgen.channel_json(
                "c1", "h", "b", 5_000_000,
                netgen.policy_json(LND, time_lock_delta=144),
                netgen.policy_json(LND, time_lock_delta=144),
            ),
            netgen.channel_json(
                "c2", "h", "c", 5_000_000,
                netgen.policy_json(LND), netgen.policy_json(LND),
            ),
        ],
    )
    graph, _ = _lnd_graph(parse_snapshot(raw))
    routes = choose_routes(graph)
    assert routes[0].channel_ids == ("c0", "c2")
    assert routes[1].channel_ids == ("c1",)


def test_route_length_cap_splits_long_lines():
    caps = [25_000_000 - i * 100_000 for i in range(25)]
    snapshot = netgen.line_snapshot([14] * 25, capacities=caps)
    graph, _ = _lnd_graph(snapshot)
    routes = choose_routes(graph)
    assert [r.n_channels for r in routes] == [18, 7]
    covered = [cid for r in routes for cid in r.channel_ids]
    assert sorted(covered) == sorted(graph.channel_ids)
    assert len(set(covered)) == len(covered)


def test_locktime_budget_caps_route_at_exact_boundary():
    """Eleven 144-blocks hops spend the whole 1584-block budget."""
    caps = [20_000_000 - i * 100_000 for i in range(14)]
    snapshot = netgen.line_snapshot([144] * 14, capacities=caps)
    graph, _ = _lnd_graph(snapshot)
    routes = choose_routes(graph, PlannerConfig(tau_min=432))
    assert routes[0].n_channels == 11
    assert routes[0].timeout_sum == 1584
    assert routes[0].lock_duration == 432


def test_channels_beyond_budget_are_left_uncovered():
    snapshot = netgen.line_snapshot([40, 1600], capacities=[5_000_000, 9_000_000])
    graph, labels = _lnd_graph(snapshot)
    plan = plan_network_attack(build_graph(snapshot), labels, MAINNET_DEFAULTS)
    assert [r.channel_ids for r in plan.routes] == [("e00",)]
    assert plan.uncovered_channel_ids == ("e01",)


def test_mixed_slot_classes_are_rejected():
    snapshot = netgen.random_snapshot(10, 4, seed=23, impl_names=("lnd", "clightning"))
    labels = tag_nodes(snapshot)
    graph = apply_slot_limits(build_graph(snapshot), labels, MAINNET_DEFAULTS)
    classes = {ch.slot_limit for ch in graph.channels()}
    assert classes == {30, 483}
    with pytest.raises(MixedSlotClassError):
        choose_routes(graph)
    with pytest.raises(MixedSlotClassError):
        choose_routes(build_graph(snapshot))  # limits never applied


def test_plan_covers_mixed_graph_via_class_split(mixed_mesh):
    snapshot, graph, labels = mixed_mesh
    plan = plan_network_attack(graph, labels, MAINNET_DEFAULTS)
    covered = [cid for r in plan.routes for cid in r.channel_ids]
    assert sorted(covered) == sorted(build_graph(snapshot).channel_ids)
    assert plan.uncovered_channel_ids == ()
    assert {r.slot_class for r in plan.routes} <= {30, 483}
    for route in plan.routes:
        assert route.lock_duration >= 432
        assert route.n_channels <= 18


def test_budget_keeps_heaviest_routes():
    snapshot = netgen.random_snapshot(30, 20, seed=31)
    labels = tag_nodes(snapshot)
    graph = build_graph(snapshot)
    full = plan_network_attack(graph, labels, MAINNET_DEFAULTS)
    capped = plan_network_attack(graph, labels, MAINNET_DEFAULTS, budget_channels=6)
    assert capped.attacker_channels <= 6
    assert len(capped.routes) == 3
    assert [r.channel_ids for r in capped.routes] == [
        r.channel_ids for r in full.routes[:3]
    ]
    assert set(capped.uncovered_channel_ids) >= set(full.uncovered_channel_ids)
    with pytest.raises(InfeasibleConfigError):
        plan_network_attack(graph, labels, MAINNET_DEFAULTS, budget_channels=1)


def test_upper_bound_dominates_greedy_lockup():
    snapshot = netgen.random_snapshot(60, 45, seed=41)
    labels = tag_nodes(snapshot)
    graph = build_graph(snapshot)
    plan = plan_network_attack(graph, labels, MAINNET_DEFAULTS)
    for row in plan.cumulative_rows():
        bound = upper_bound_capacity(graph, row["cumulative_attacker_channels"])
        assert row["cumulative_capacity_fraction"] <= bound + 1e-12


def test_upper_bound_exact_on_tiny_graph():
    raw = netgen.snapshot_json(
        ["a", "b", "c"],
        [
            netgen.channel_json("c1", "a", "b", 10_000_000,
                                netgen.policy_json(LND), netgen.policy_json(LND)),
            netgen.channel_json("c2", "b", "c", 14_000_000,
                                netgen.policy_json(LND), netgen.policy_json(LND)),
        ],
    )
    graph = build_graph(parse_snapshot(raw))
    assert upper_bound_capacity(graph, 2, max_route_channels=1) == pytest.approx(14 / 24)
    assert upper_bound_capacity(graph, 4, max_route_channels=1) == pytest.approx(1.0)


def test_lock_period_sweep_tightens_tau(lnd_mesh):
    _, graph, labels = lnd_mesh
    sweeps = lock_period_sweep(graph, labels, [1.0, 3.0, 7.0])
    taus = [plan.tau_min for _, plan in sweeps]
    assert taus == [144, 432, 1008]
    with pytest.raises(InfeasibleConfigError):
        lock_period_sweep(graph, labels, [14.0])
    with pytest.raises(InfeasibleConfigError):
        lock_period_sweep(graph, labels, [0.0])


def test_route_length_sweep_bounds(lnd_mesh):
    _, graph, labels = lnd_mesh
    sweeps = route_length_sweep(graph, labels, [3, 20])
    assert [plan.routes[0].n_channels <= limit - 2 for limit, plan in sweeps] == [True, True]
    with pytest.raises(InfeasibleConfigError):
        route_length_sweep(graph, labels, [2])
    with pytest.raises(InfeasibleConfigError):
        route_length_sweep(graph, labels, [21])


def test_betweenness_weight_mode_targets_bridges(barbell):
    _, graph, labels = barbell
    config = PlannerConfig(weight_mode=WeightMode.BETWEENNESS, max_route_channels=1)
    plan = plan_network_attack(graph, labels, MAINNET_DEFAULTS, config)
    assert plan.routes[0].channel_ids == ("bridge",)


def test_plan_json_round_trip(lnd_mesh):
    _, graph, labels = lnd_mesh
    plan = plan_network_attack(graph, labels, MAINNET_DEFAULTS, budget_channels=8)
    doc = plan.to_json_dict()
    again = AttackPlan.from_json_dict(doc)
    assert again.tau_min == plan.tau_min
    assert again.total_capacity_sat == plan.total_capacity_sat
    assert [r.channel_ids for r in again.routes] == [r.channel_ids for r in plan.routes]
    assert [r.lock_duration for r in again.routes] == [r.lock_duration for r in plan.routes]
    assert again.uncovered_channel_ids == plan.uncovered_channel_ids
