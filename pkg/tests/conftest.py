import dataclasses

import pytest

from immunids.config import ScenarioConfig
from immunids.ddsim.topology import PUBLISHER, RELAY, SUBSCRIBER, Network, NetworkNode


def manual_network(kinds, edges, config=None, malicious=()):
    """Build a Network with an explicit node-kind list and edge list.

    `kinds` is a sequence of 'publisher' | 'subscriber' | 'relay'; node ids
    are positional.  Counts in the attached config are made consistent so
    resolved() knobs behave.
    """
    n = len(kinds)
    neighbors = {i: set() for i in range(n)}
    for a, b in edges:
        neighbors[a].add(b)
        neighbors[b].add(a)
    if config is None:
        config = ScenarioConfig()
    config = dataclasses.replace(
        config,
        n_p=sum(1 for k in kinds if k == PUBLISHER),
        n_s=sum(1 for k in kinds if k == SUBSCRIBER),
        n_r=sum(1 for k in kinds if k == RELAY),
        n_m=len(malicious),
    )
    nodes = [
        NetworkNode(
            node_id=i,
            kind=kinds[i],
            malicious=i in set(malicious),
            position=(0.0, 0.0),
            neighbors=sorted(neighbors[i]),
        )
        for i in range(n)
    ]
    return Network(nodes, config)


@pytest.fixture
def line4():
    """subscriber - relay - relay - publisher chain."""
    return manual_network(
        [SUBSCRIBER, RELAY, RELAY, PUBLISHER],
        [(0, 1), (1, 2), (2, 3)],
    )


# Published per-factor significance tables used as a fixture for the
# feature-selection contract.  Rows follow METRIC_NAMES order, columns follow
# FACTOR_NAMES order (N_M, N_P, I_P, mu_M, N_R, N_S, delta_sigma).
REFERENCE_SIGNIFICANCE_MALICIOUS = {
    "response_time":           (0.07, 0.37, 0.07, 0.05, 0.02, 0.33, 0.09),
    "one_hop_delay":           (0.51, 0.01, 0.12, 0.00, 0.22, 0.12, 0.01),
    "data_throughput":         (0.72, 0.03, 0.07, 0.15, 0.01, 0.00, 0.02),
    "interest_throughput":     (0.64, 0.01, 0.02, 0.01, 0.03, 0.20, 0.09),
    "passed_hops":             (0.05, 0.26, 0.26, 0.03, 0.03, 0.32, 0.05),
    "delay_probability":       (0.23, 0.00, 0.17, 0.08, 0.07, 0.31, 0.12),
    "long_buffer_probability": (0.39, 0.03, 0.11, 0.06, 0.07, 0.09, 0.25),
    "data_drop_rate":          (0.02, 0.03, 0.53, 0.00, 0.18, 0.05, 0.19),
    "buffer_drop_rate":        (0.37, 0.00, 0.27, 0.01, 0.04, 0.23, 0.07),
}

REFERENCE_SIGNIFICANCE_HONEST = {
    "response_time":           (0.25, 0.57, 0.04, 0.04, 0.05, 0.00, 0.05),
    "one_hop_delay":           (0.35, 0.00, 0.32, 0.02, 0.12, 0.07, 0.13),
    "data_throughput":         (0.29, 0.06, 0.14, 0.02, 0.07, 0.02, 0.40),
    "interest_throughput":     (0.63, 0.02, 0.03, 0.02, 0.04, 0.18, 0.08),
    "passed_hops":             (0.09, 0.22, 0.22, 0.08, 0.08, 0.22, 0.09),
    "delay_probability":       (0.17, 0.01, 0.20, 0.02, 0.08, 0.37, 0.15),
    "long_buffer_probability": (0.29, 0.02, 0.12, 0.05, 0.11, 0.14, 0.28),
    "data_drop_rate":          (0.02, 0.02, 0.53, 0.06, 0.05, 0.01, 0.31),
    "buffer_drop_rate":        (0.19, 0.00, 0.22, 0.00, 0.01, 0.19, 0.39),
}


def reference_tables():
    """The two fixture tables as SignificanceTable objects."""
    import numpy as np

    from immunids.config import FACTOR_NAMES
    from immunids.doe import SignificanceTable
    from immunids.metrics import METRIC_NAMES

    def build(data):
        values = np.array([data[m] for m in METRIC_NAMES])
        return SignificanceTable(
            metric_names=tuple(METRIC_NAMES), factor_names=tuple(FACTOR_NAMES), values=values
        )

    return build(REFERENCE_SIGNIFICANCE_MALICIOUS), build(REFERENCE_SIGNIFICANCE_HONEST)
