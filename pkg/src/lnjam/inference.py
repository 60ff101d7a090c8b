"""Guessing which implementation a node runs from its announced policies.

Nodes rarely change shipped defaults, so matching a node's announced
cltv_expiry_delta, htlc_minimum_msat and fee_proportional_millionths against
each implementation's defaults separates the population well. The weights
reflect how discriminative each parameter is (delta values barely overlap
between implementations; fee rates overlap more).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping

from .topology import (
    MAINNET_DEFAULTS,
    ChannelPolicy,
    DefaultsTable,
    ImplLabel,
    NetworkGraph,
    Snapshot,
)

logger = logging.getLogger(__name__)

# Tie-breaks favour the most common implementation first.
_LABEL_PRIORITY = (ImplLabel.LND, ImplLabel.CLIGHTNING, ImplLabel.ECLAIR)


@dataclass(frozen=True)
class InferenceWeights:
    """Per-parameter match weights; must sum to 1."""

    cltv_expiry_delta: float = 0.75
    htlc_minimum_msat: float = 0.2
    fee_proportional_millionths: float = 0.05

    def __post_init__(self):
        total = (
            self.cltv_expiry_delta
            + self.htlc_minimum_msat
            + self.fee_proportional_millionths
        )
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {total}")


DEFAULT_WEIGHTS = InferenceWeights()


def score_node(
    policies: Iterable[ChannelPolicy],
    defaults: DefaultsTable = MAINNET_DEFAULTS,
    weights: InferenceWeights = DEFAULT_WEIGHTS,
) -> dict[ImplLabel, float]:
    """Score one node's announced policies against each implementation.

    Each policy contributes the weight of every parameter that equals the
    implementation's default; the score is the mean contribution over all
    policies. No policies at all yields 0 for every label.
    """
    policies = list(policies)
    scores: dict[ImplLabel, float] = {}
    for label, d in defaults.items():
        if not policies:
            scores[label] = 0.0
            continue
        total = 0.0
        for p in policies:
            if p.cltv_expiry_delta == d.cltv_expiry_delta:
                total += weights.cltv_expiry_delta
            if p.htlc_minimum_msat == d.htlc_minimum_msat:
                total += weights.htlc_minimum_msat
            if p.fee_proportional_millionths == d.fee_proportional_millionths:
                total += weights.fee_proportional_millionths
        scores[label] = total / len(policies)
    return scores


def announced_policies(snapshot: Snapshot) -> dict[str, list[ChannelPolicy]]:
    """Collect every policy each node announces, keyed by node id.

    Disabled directions still count: a disabled channel discloses its
    configuration all the same. Nodes with no disclosed policy map to [].
    """
    by_node: dict[str, list[ChannelPolicy]] = {n: [] for n in snapshot.node_ids}
    for ch in snapshot.channels:
        if ch.policy_a_to_b is not None:
            by_node[ch.endpoint_a].append(ch.policy_a_to_b)
        if ch.policy_b_to_a is not None:
            by_node[ch.endpoint_b].append(ch.policy_b_to_a)
    return by_node


def tag_nodes(
    snapshot: Snapshot,
    defaults: DefaultsTable = MAINNET_DEFAULTS,
    weights: InferenceWeights = DEFAULT_WEIGHTS,
) -> dict[str, ImplLabel]:
    """Assign every node the implementation with the highest score.

    Ties (including the no-policies case, where all scores are 0) go to the
    most widespread implementation: LND, then C-Lightning, then Eclair.
    """
    labels: dict[str, ImplLabel] = {}
    for node_id, policies in announced_policies(snapshot).items():
        scores = score_node(policies, defaults, weights)
        best = _LABEL_PRIORITY[0]
        for label in _LABEL_PRIORITY[1:]:
            if scores[label] > scores[best]:
                best = label
        labels[node_id] = best
    counts = {label: 0 for label in _LABEL_PRIORITY}
    for label in labels.values():
        counts[label] += 1
    logger.info(
        "tagged %d nodes: %s",
        len(labels),
        ", ".join(f"{label.value}={n}" for label, n in counts.items()),
    )
    return labels


def split_by_slot_class(
    graph: NetworkGraph, labels: Mapping[str, ImplLabel]
) -> tuple[NetworkGraph, NetworkGraph]:
    """Split channels into the 483-slot class and the 30-slot class.

    A channel supports 483 concurrent HTLCs only when both endpoints run LND;
    any other pairing is capped at 30 by the stricter side. Returns
    (lnd_only_subgraph, mixed_subgraph); the two channel sets partition the
    input graph.
    """
    lnd_only = []
    mixed = []
    for ch in graph.channels():
        if (
            labels.get(ch.endpoint_a) is ImplLabel.LND
            and labels.get(ch.endpoint_b) is ImplLabel.LND
        ):
            lnd_only.append(ch.channel_id)
        else:
            mixed.append(ch.channel_id)
    return graph.subgraph(lnd_only), graph.subgraph(mixed)
