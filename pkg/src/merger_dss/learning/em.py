"""EM parameter fitting with Dirichlet pseudo-counts over missing-data cases.

The E-step runs exact inference once per distinct observed pattern (patterns
are cached with multiplicities; fully observed rows bypass inference and are
counted directly, which also makes the complete-data fit a closed-form
single pass). The M-step is (expected counts + pseudoCount), row-normalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DatasetError, DocumentError
from ..factors import Cpt, Evidence, Factor
from ..inference import InferenceSession
from ..network import CHANCE, NetworkDoc, NodeSpec, TableSpec, node_cpt
from .dataset import MISSING, CaseDataset


@dataclass(frozen=True)
class FitReport:
    network: NetworkDoc  # input structure with fitted explicit CPTs
    loglik_trace: tuple[float, ...]
    iterations: int
    converged: bool

    def cpt(self, node: str) -> Cpt:
        return node_cpt(self.network, self.network.node(node))


def _with_tables(structure: NetworkDoc, tables: dict[str, np.ndarray]) -> NetworkDoc:
    nodes = []
    for n in structure.nodes:
        nodes.append(
            NodeSpec(
                n.name,
                CHANCE,
                states=n.states,
                parents=n.parents,
                table=TableSpec("explicit", values=tuple(tables[n.name].reshape(-1))),
            )
        )
    return NetworkDoc(structure.name, tuple(nodes), ())


def _uniform_tables(structure: NetworkDoc) -> dict[str, np.ndarray]:
    tables = {}
    for n in structure.nodes:
        k = len(n.states or ())
        cards = [len(structure.node(p).states or ()) for p in n.parents]
        shape = tuple(cards) + (k,)
        tables[n.name] = np.full(shape, 1.0 / k)
    return tables


def em_fit(
    structure: NetworkDoc,
    data: CaseDataset,
    pseudo_count: float = 1.0,
    tol: float = 1e-4,
    max_iter: int = 100,
) -> FitReport:
    if pseudo_count <= 0:
        raise DatasetError("pseudo_count must be > 0")
    for n in structure.nodes:
        if n.kind != CHANCE:
            raise DocumentError(f"em_fit needs a chance-only structure; found {n.kind} {n.name!r}")
    if data.n == 0:
        raise DatasetError("empty dataset")
    data.check_matches(structure)

    names = [n.name for n in structure.nodes]
    col = {v.name: j for j, v in enumerate(data.schema)}
    cols = [col[name] for name in names]
    parent_cols = {n.name: [col[p] for p in n.parents] for n in structure.nodes}

    # Distinct observed patterns with multiplicities.
    patterns, counts = np.unique(data.rows[:, cols], axis=0, return_counts=True)
    complete_mask = np.all(patterns != MISSING, axis=1)

    # Complete rows contribute parameter-independent counts; tally them once.
    tables = _uniform_tables(structure)
    base_counts: dict[str, np.ndarray] = {
        name: np.zeros_like(tables[name]) for name in names
    }
    family_flat: dict[str, np.ndarray] = {}
    if np.any(complete_mask):
        comp = patterns[complete_mask]
        wts = counts[complete_mask].astype(float)
        for i, name in enumerate(names):
            shape = base_counts[name].shape
            pidx = [names.index(p) for p in structure.node(name).parents]
            flat = np.ravel_multi_index(
                tuple(comp[:, j] for j in pidx) + (comp[:, i],), shape
            )
            np.add.at(base_counts[name].reshape(-1), flat, wts)
            family_flat[name] = flat

    incomplete = [
        (patterns[i], float(counts[i]))
        for i in range(len(patterns))
        if not complete_mask[i]
    ]

    trace: list[float] = []
    converged = False
    iterations = 0
    for it in range(max_iter):
        iterations = it + 1
        current = _with_tables(structure, tables)
        expected = {name: base_counts[name].copy() for name in names}
        loglik = 0.0

        # Complete patterns: loglik is a table lookup under current parameters.
        if np.any(complete_mask):
            wts = counts[complete_mask].astype(float)
            for name in names:
                theta = tables[name].reshape(-1)
                vals = theta[family_flat[name]]
                if np.any(vals <= 0.0):
                    loglik = -math.inf
                else:
                    loglik += float(wts @ np.log(vals))

        if incomplete:
            session = InferenceSession(current)
            for pattern, weight in incomplete:
                session.clear_evidence()
                for i, name in enumerate(names):
                    if pattern[i] != MISSING:
                        session.set_evidence(
                            Evidence.hard(session.variable(name), int(pattern[i]))
                        )
                posts = session.family_posteriors()
                for name in names:
                    expected[name] += weight * posts[name]
                loglik += weight * session.log_probability_of_evidence()

        trace.append(loglik)
        smoothed = {
            name: expected[name] + pseudo_count for name in names
        }
        tables = {
            name: smoothed[name] / smoothed[name].sum(axis=-1, keepdims=True)
            for name in names
        }
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) < tol:
            converged = True
            break

    return FitReport(
        network=_with_tables(structure, tables),
        loglik_trace=tuple(trace),
        iterations=iterations,
        converged=converged,
    )
