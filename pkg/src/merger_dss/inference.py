"""Exact inference: moralization, triangulation, junction tree, division-free
two-phase message passing, evidence management, probability of evidence.

Message combination is Shafer-Shenoy style (products of inbound messages,
never clique division), so deterministic CPTs with structural zeros are safe.
Triangulation is greedy min-fill with a lexicographic tie-break; the
elimination order is recorded for reproducibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DocumentError,
    EvidenceError,
    ImpossibleEvidenceError,
    UnknownNodeError,
)
from .factors import Cpt, Evidence, Factor, Variable, factor_marginalize, factor_multiply
from .network import CHANCE, DECISION, UTILITY, NetworkDoc, NodeSpec, TableSpec, node_cpt
from .oobn import FlatNetwork


def chance_projection(doc: NetworkDoc) -> NetworkDoc:
    """Drop utility nodes and turn decision nodes into uniform chance roots.

    The uniform-policy convention only serves marginal monitors; decision
    evaluation never goes through this projection.
    """
    nodes = []
    for n in doc.nodes:
        if n.kind == UTILITY:
            continue
        if n.kind == DECISION:
            k = len(n.states or ())
            nodes.append(
                NodeSpec(
                    n.name,
                    CHANCE,
                    states=n.states,
                    parents=(),
                    table=TableSpec("explicit", values=tuple([1.0 / k] * k)),
                )
            )
        else:
            nodes.append(n)
    return NetworkDoc(doc.name, tuple(nodes), ())


@dataclass(frozen=True)
class JunctionTree:
    cliques: tuple[tuple[str, ...], ...]
    separators: tuple[tuple[int, int, tuple[str, ...]], ...]  # (i, j, separator vars)
    elimination_order: tuple[str, ...]
    cpt_assignment: tuple[int, ...]  # per-CPT clique index (node order of the doc)

    def neighbors(self, i: int) -> list[tuple[int, tuple[str, ...]]]:
        out = []
        for a, b, sep in self.separators:
            if a == i:
                out.append((b, sep))
            elif b == i:
                out.append((a, sep))
        return out


def _moral_graph(doc: NetworkDoc) -> dict[str, set[str]]:
    adj: dict[str, set[str]] = {n.name: set() for n in doc.nodes}
    for n in doc.nodes:
        family = list(n.parents) + [n.name]
        for i, a in enumerate(family):
            for b in family[i + 1 :]:
                if a != b:
                    adj[a].add(b)
                    adj[b].add(a)
    return adj


def _fill_count(adj: Mapping[str, set[str]], v: str) -> int:
    nbrs = sorted(adj[v])
    missing = 0
    for i, a in enumerate(nbrs):
        for b in nbrs[i + 1 :]:
            if b not in adj[a]:
                missing += 1
    return missing


def _eliminate(adj: dict[str, set[str]], order: Iterable[str]) -> list[set[str]]:
    cliques: list[set[str]] = []
    adj = {k: set(v) for k, v in adj.items()}
    for v in order:
        nbrs = adj[v]
        cliques.append({v} | nbrs)
        for a in nbrs:
            adj[a] |= nbrs - {a}
            adj[a].discard(v)
        for a in nbrs:
            adj[a].discard(v)
        del adj[v]
    return cliques


def _min_fill_order(adj: dict[str, set[str]]) -> list[str]:
    adj = {k: set(v) for k, v in adj.items()}
    order: list[str] = []
    remaining = sorted(adj)
    while remaining:
        best = min(remaining, key=lambda v: (_fill_count(adj, v), v))
        order.append(best)
        nbrs = adj[best]
        for a in nbrs:
            adj[a] |= nbrs - {a}
            adj[a].discard(best)
        del adj[best]
        remaining.remove(best)
    return order


def _reverse_topological_order(doc: NetworkDoc) -> list[str]:
    from .network import _toposort

    topo = _toposort(doc)
    if topo is None:
        raise DocumentError("network has a cycle; cannot order it")
    return list(reversed(topo))


def build_junction_tree(net: NetworkDoc | FlatNetwork, elimination: str = "min-fill") -> JunctionTree:
    """Build a junction tree over the chance projection of the network."""
    doc = net.net if isinstance(net, FlatNetwork) else net
    doc = chance_projection(doc)
    adj = _moral_graph(doc)
    if elimination == "min-fill":
        order = _min_fill_order(adj)
    elif elimination == "reverse-topological":
        order = _reverse_topological_order(doc)
    else:
        raise DocumentError(f"unknown elimination mode {elimination!r}")

    elim_cliques = _eliminate(adj, order)
    # Keep maximal cliques only; for a perfect elimination order a clique is
    # maximal iff no later elimination clique contains it.
    maximal: list[set[str]] = []
    for i, c in enumerate(elim_cliques):
        if any(c < later for later in elim_cliques[i + 1 :]) or any(c <= m for m in maximal):
            continue
        maximal.append(c)
    cliques = tuple(tuple(sorted(c)) for c in maximal)

    # Maximum spanning tree over separator sizes (Kruskal, deterministic ties).
    # Empty separators are allowed so disconnected networks still yield one
    # tree; messages across them are scalars.
    candidates = []
    for i in range(len(cliques)):
        for j in range(i + 1, len(cliques)):
            sep = tuple(sorted(set(cliques[i]) & set(cliques[j])))
            candidates.append((-len(sep), i, j, sep))
    candidates.sort()
    parent = list(range(len(cliques)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    separators: list[tuple[int, int, tuple[str, ...]]] = []
    for _, i, j, sep in candidates:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            separators.append((i, j, sep))

    assignment = []
    for n in doc.nodes:
        family = set(n.parents) | {n.name}
        for idx, c in enumerate(cliques):
            if family <= set(c):
                assignment.append(idx)
                break
        else:
            raise DocumentError(f"no clique covers the family of {n.name!r}")
    return JunctionTree(cliques, tuple(separators), tuple(order), tuple(assignment))


class InferenceSession:
    """Evidence + calibrated clique beliefs over one flat network.

    Single writer per session; queries on a calibrated session are read-only.
    """

    def __init__(
        self,
        net: NetworkDoc | FlatNetwork,
        elimination: str = "min-fill",
    ):
        flat = net if isinstance(net, FlatNetwork) else None
        doc = net.net if isinstance(net, FlatNetwork) else net
        self.source = doc
        self.doc = chance_projection(doc)
        self.tree = build_junction_tree(doc, elimination)
        self._cpts: list[Cpt] = [node_cpt(self.doc, n) for n in self.doc.nodes]
        self._vars = {n.name: n.variable() for n in self.doc.nodes}
        self.evidence: dict[str, Evidence] = {}
        self._beliefs: list[Factor] | None = None
        self._messages: dict[tuple[int, int], Factor] | None = None
        self._p_evidence: float | None = None
        if flat is not None:
            for f in flat.findings:
                var = self._vars.get(f.node)
                if var is None:
                    continue
                if f.kind == "hard":
                    self.set_evidence(Evidence.hard(var, f.value))
                else:
                    self.set_evidence(Evidence.likelihood(var, f.value))

    # -- evidence management ----------------------------------------------

    def variable(self, node: str) -> Variable:
        var = self._vars.get(node)
        if var is None:
            raise UnknownNodeError(
                f"unknown node {node!r}; valid nodes: {sorted(self._vars)}"
            )
        return var

    def set_evidence(self, e: Evidence) -> "InferenceSession":
        var = self.variable(e.variable.name)
        if var.states != e.variable.states:
            raise EvidenceError(
                f"evidence on {e.variable.name!r} does not match the node's states"
            )
        self.evidence[e.variable.name] = e
        self._decalibrate()
        return self

    def retract_evidence(self, node: str) -> "InferenceSession":
        self.variable(node)
        self.evidence.pop(node, None)
        self._decalibrate()
        return self

    def clear_evidence(self) -> "InferenceSession":
        self.evidence.clear()
        self._decalibrate()
        return self

    def _decalibrate(self) -> None:
        self._beliefs = None
        self._messages = None
        self._p_evidence = None

    @property
    def calibrated(self) -> bool:
        return self._beliefs is not None

    # -- propagation --------------------------------------------------------

    def _clique_potentials(self) -> list[Factor]:
        potentials = [Factor.unit() for _ in self.tree.cliques]
        for cpt, idx in zip(self._cpts, self.tree.cpt_assignment):
            potentials[idx] = factor_multiply(potentials[idx], cpt.factor)
        for e in self.evidence.values():
            target = next(
                i for i, c in enumerate(self.tree.cliques) if e.variable.name in c
            )
            potentials[target] = factor_multiply(potentials[target], e.as_factor())
        return potentials

    def calibrate(self) -> None:
        if self._beliefs is not None:
            return
        potentials = self._clique_potentials()
        n = len(self.tree.cliques)
        nbrs: dict[int, list[tuple[int, tuple[str, ...]]]] = {
            i: self.tree.neighbors(i) for i in range(n)
        }
        messages: dict[tuple[int, int], Factor] = {}

        # Two passes rooted at clique 0: collect (children -> parents), then
        # distribute (parents -> children). Iterative DFS keeps stacks shallow.
        order: list[tuple[int, int]] = []  # (node, parent)
        stack = [(0, -1)]
        seen = {0}
        while stack:
            node, par = stack.pop()
            order.append((node, par))
            for nxt, _ in nbrs[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append((nxt, node))
        if len(seen) != n:
            raise DocumentError("junction tree is disconnected; add a linking clique")

        def message(src: int, dst: int, sep: tuple[str, ...]) -> Factor:
            prod = potentials[src]
            for other, _ in nbrs[src]:
                if other != dst:
                    prod = factor_multiply(prod, messages[(other, src)])
            drop = [v for v in prod.scope if v.name not in sep]
            return factor_marginalize(prod, drop)

        for node, par in reversed(order):
            if par >= 0:
                sep = next(s for nxt, s in nbrs[node] if nxt == par)
                messages[(node, par)] = message(node, par, sep)
        for node, par in order:
            if par >= 0:
                sep = next(s for nxt, s in nbrs[par] if nxt == node)
                messages[(par, node)] = message(par, node, sep)

        beliefs = []
        for i in range(n):
            b = potentials[i]
            for other, _ in nbrs[i]:
                b = factor_multiply(b, messages[(other, i)])
            beliefs.append(b)
        self._messages = messages
        self._beliefs = beliefs
        self._p_evidence = float(beliefs[0].values.sum())
        if self._p_evidence <= 0.0:
            raise ImpossibleEvidenceError(
                "entered evidence has probability zero under this model"
            )

    # -- queries -------------------------------------------------------------

    def probability_of_evidence(self) -> float:
        self.calibrate()
        return float(self._p_evidence)

    def log_probability_of_evidence(self) -> float:
        return math.log(self.probability_of_evidence())

    def posterior_marginals(self, targets: Iterable[str] | None = None) -> dict[str, np.ndarray]:
        self.calibrate()
        wanted = list(targets) if targets is not None else sorted(self._vars)
        out: dict[str, np.ndarray] = {}
        for name in wanted:
            self.variable(name)
            idx = next(i for i, c in enumerate(self.tree.cliques) if name in c)
            belief = self._beliefs[idx]
            marg = factor_marginalize(belief, [v for v in belief.scope if v.name != name])
            out[name] = np.asarray(marg.values, dtype=float) / self._p_evidence
        return out

    def family_posteriors(self) -> dict[str, np.ndarray]:
        """P(parents, child | evidence) per node, shaped like the node's CPT."""
        self.calibrate()
        out: dict[str, np.ndarray] = {}
        for spec, cpt, idx in zip(self.doc.nodes, self._cpts, self.tree.cpt_assignment):
            belief = self._beliefs[idx]
            scope = cpt.factor.scope
            marg = factor_marginalize(
                belief, [v for v in belief.scope if v.name not in {s.name for s in scope}]
            )
            out[spec.name] = marg.reorder(scope).values / self._p_evidence
        return out

    def separator_max_discrepancy(self) -> float:
        """Largest disagreement between adjacent cliques on a separator marginal."""
        self.calibrate()
        worst = 0.0
        for i, j, sep in self.tree.separators:
            bi = self._beliefs[i]
            bj = self._beliefs[j]
            mi = factor_marginalize(bi, [v for v in bi.scope if v.name not in sep])
            mj = factor_marginalize(bj, [v for v in bj.scope if v.name not in sep])
            mj = mj.reorder(mi.scope)
            worst = max(worst, float(np.abs(mi.values - mj.values).max()))
        return worst / max(self._p_evidence, 1e-300)
