"""Shared test fixtures: tiny hand-built networks and random generators."""

from __future__ import annotations

import numpy as np

from merger_dss.factors import Variable
from merger_dss.network import CHANCE, NetworkDoc, NodeSpec, TableSpec


def chance(name, states, parents=(), values=None):
    if values is None:
        k = len(states)
        n_rows = 1
        values = [1.0 / k] * k
    return NodeSpec(
        name, CHANCE, states=tuple(states), parents=tuple(parents),
        table=TableSpec("explicit", values=tuple(float(v) for v in values)),
    )


def random_dag_network(rng: np.random.Generator, n_nodes=6, max_card=3, max_parents=3,
                       edge_p=0.4) -> NetworkDoc:
    """A random chance-only network with Dirichlet CPTs, ordered v0..v{n-1}."""
    names = [f"v{i}" for i in range(n_nodes)]
    cards = [int(rng.integers(2, max_card + 1)) for _ in names]
    nodes = []
    for i, name in enumerate(names):
        pool = list(range(i))
        rng.shuffle(pool)
        parents = sorted(pool[: int(rng.integers(0, min(max_parents, i) + 1))]) if pool else []
        parents = [p for p in parents if rng.random() < edge_p or True][:max_parents]
        parent_names = [names[p] for p in parents]
        n_rows = int(np.prod([cards[p] for p in parents])) if parents else 1
        rows = rng.dirichlet(np.ones(cards[i]) * 2.0, size=n_rows)
        nodes.append(
            NodeSpec(
                name, CHANCE,
                states=tuple(f"s{j}" for j in range(cards[i])),
                parents=tuple(parent_names),
                table=TableSpec("explicit", values=tuple(rows.reshape(-1))),
            )
        )
    return NetworkDoc("random", tuple(nodes))


def joint_size(doc: NetworkDoc) -> int:
    size = 1
    for n in doc.nodes:
        size *= len(n.states or ())
    return size
