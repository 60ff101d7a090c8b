import pytest

from lnjam.inference import tag_nodes
from lnjam.topology import build_graph

import netgen


@pytest.fixture
def lnd_mesh():
    """All-LND 40-node connected snapshot: (snapshot, graph, labels)."""
    snapshot = netgen.random_snapshot(40, 30, seed=7)
    return snapshot, build_graph(snapshot), tag_nodes(snapshot)


@pytest.fixture
def mixed_mesh():
    """Mixed-implementation 36-node snapshot: (snapshot, graph, labels)."""
    snapshot = netgen.random_snapshot(36, 28, seed=19, impl_names=netgen.IMPL_NAMES)
    return snapshot, build_graph(snapshot), tag_nodes(snapshot)


@pytest.fixture
def barbell():
    """Two LND K6 cliques and one bridge: (snapshot, graph, labels)."""
    snapshot = netgen.barbell_snapshot()
    return snapshot, build_graph(snapshot), tag_nodes(snapshot)
