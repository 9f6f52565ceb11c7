"""Declarative networks: chance/decision/utility nodes, CPTs, (de)serialization.

The document format is UTF-8 JSON:

    {"name": ..., "nodes": [{"name", "kind", "states"?, "parents": [...],
        "table": {"type": "explicit"|"utility"|"expression", "values"|"expr"}}],
     "decisionOrder": [...]}

Explicit values are flat arrays in factor cell order (parents ++ [child],
first scope variable slowest). Expression tables cover exactly the constructs
the bundled models need:

    {"op": "bernoulli", "param": <parent>, "complement": bool}
    {"op": "select", "switch": <parent>, "cases": {label: <expr>}}
    {"op": "constant", "state": <label>}
    {"op": "parent", "name": <parent>}   # child copies that parent's state
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import DocumentError, ParseError
from .factors import Cpt, Factor, Variable, ROW_SUM_TOL

CHANCE, DECISION, UTILITY = "chance", "decision", "utility"
NODE_KINDS = (CHANCE, DECISION, UTILITY)


@dataclass(frozen=True)
class TableSpec:
    """One of: explicit CPT values, utility values, or a CPT expression."""

    type: str  # "explicit" | "utility" | "expression"
    values: tuple[float, ...] | None = None
    expr: Any = None

    def to_json(self) -> dict:
        if self.type == "expression":
            return {"type": "expression", "expr": self.expr}
        return {"type": self.type, "values": list(self.values)}


@dataclass(frozen=True)
class NodeSpec:
    name: str
    kind: str
    states: tuple[str, ...] | None = None
    parents: tuple[str, ...] = ()
    table: TableSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        if self.states is not None:
            object.__setattr__(self, "states", tuple(self.states))

    def variable(self) -> Variable:
        if self.states is None:
            raise DocumentError(f"node {self.name!r} has no states")
        return Variable(self.name, self.states)


@dataclass(frozen=True)
class NetworkDoc:
    name: str
    nodes: tuple[NodeSpec, ...]
    decision_order: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "decision_order", tuple(self.decision_order))

    def node(self, name: str) -> NodeSpec:
        for n in self.nodes:
            if n.name == name:
                return n
        raise DocumentError(f"no node named {name!r} in network {self.name!r}")

    def has_node(self, name: str) -> bool:
        return any(n.name == name for n in self.nodes)

    def variable(self, name: str) -> Variable:
        return self.node(name).variable()

    def nodes_of_kind(self, kind: str) -> tuple[NodeSpec, ...]:
        return tuple(n for n in self.nodes if n.kind == kind)

    def chance_nodes(self) -> tuple[NodeSpec, ...]:
        return self.nodes_of_kind(CHANCE)

    def with_node_replaced(self, node: NodeSpec) -> "NetworkDoc":
        return replace(
            self, nodes=tuple(node if n.name == node.name else n for n in self.nodes)
        )


@dataclass(frozen=True)
class Finding:
    """A validation finding; severity is 'error' or 'warning'."""

    code: str
    node: str | None
    message: str
    severity: str = "error"


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...]

    @property
    def ok(self) -> bool:
        return not any(f.severity == "error" for f in self.findings)

    def codes(self) -> set[str]:
        return {f.code for f in self.findings}


def _toposort(doc: NetworkDoc) -> list[str] | None:
    """Kahn topological order over parent arcs, or None on a cycle."""
    names = [n.name for n in doc.nodes]
    known = set(names)
    children: dict[str, list[str]] = {n: [] for n in names}
    indeg = {n: 0 for n in names}
    for n in doc.nodes:
        for p in n.parents:
            if p in known:
                children[p].append(n.name)
                indeg[n.name] += 1
    queue = sorted(n for n in names if indeg[n] == 0)
    order = []
    while queue:
        cur = queue.pop(0)
        order.append(cur)
        for ch in children[cur]:
            indeg[ch] -= 1
            if indeg[ch] == 0:
                queue.append(ch)
        queue.sort()
    return order if len(order) == len(names) else None


def validate(doc: NetworkDoc) -> ValidationReport:
    """Structural checks; problems are reported, never thrown."""
    findings: list[Finding] = []
    seen: set[str] = set()
    for n in doc.nodes:
        if n.name in seen:
            findings.append(Finding("duplicate-node", n.name, f"node {n.name!r} declared twice"))
        seen.add(n.name)

    names = {n.name for n in doc.nodes}
    child_count = {name: 0 for name in names}
    for n in doc.nodes:
        if n.kind not in NODE_KINDS:
            findings.append(Finding("unknown-kind", n.name, f"unknown node kind {n.kind!r}"))
            continue
        for p in n.parents:
            if p not in names:
                findings.append(
                    Finding("dangling-parent", n.name, f"parent {p!r} of {n.name!r} does not exist")
                )
            else:
                child_count[p] += 1
        if n.kind == UTILITY:
            if n.states is not None:
                findings.append(Finding("utility-states", n.name, "utility nodes carry no states"))
            if n.table is None or n.table.type != "utility":
                findings.append(Finding("table-missing", n.name, "utility node needs a utility table"))
        elif n.states is None or len(n.states) < 2:
            findings.append(Finding("state-count", n.name, f"{n.kind} node needs >= 2 states"))
        if n.kind == DECISION and n.table is not None:
            findings.append(Finding("decision-table", n.name, "decision nodes have no CPT"))
        if n.kind == CHANCE and n.table is None:
            findings.append(Finding("table-missing", n.name, "chance node needs a table"))

    if _toposort(doc) is None:
        findings.append(Finding("cycle", None, "directed graph over nodes has a cycle"))

    for n in doc.nodes:
        if n.kind == UTILITY and child_count.get(n.name, 0) > 0:
            findings.append(Finding("utility-leaf", n.name, "utility nodes must be leaves"))

    decisions = {n.name for n in doc.nodes if n.kind == DECISION}
    if set(doc.decision_order) != decisions or len(doc.decision_order) != len(decisions):
        findings.append(
            Finding(
                "decision-order",
                None,
                f"decisionOrder {list(doc.decision_order)} must list exactly the decision "
                f"nodes {sorted(decisions)}",
            )
        )

    # Table shape and row normalization (only where structure already checks out).
    if not any(f.code in ("dangling-parent", "cycle", "duplicate-node") for f in findings):
        for n in doc.nodes:
            findings.extend(_check_table(doc, n))
    return ValidationReport(tuple(findings))


def _parent_cards(doc: NetworkDoc, n: NodeSpec) -> list[int] | None:
    cards = []
    for p in n.parents:
        spec = doc.node(p)
        if spec.kind == UTILITY or spec.states is None:
            return None
        cards.append(len(spec.states))
    return cards


def _check_table(doc: NetworkDoc, n: NodeSpec) -> list[Finding]:
    findings: list[Finding] = []
    if n.table is None:
        return findings
    cards = _parent_cards(doc, n)
    if cards is None:
        return [Finding("bad-parent", n.name, f"{n.name!r} has a utility or stateless parent")]
    n_rows = int(np.prod(cards)) if cards else 1
    if n.table.type == "utility":
        if n.table.values is None or len(n.table.values) != n_rows:
            findings.append(
                Finding("utility-shape", n.name, f"utility table needs {n_rows} values")
            )
    elif n.table.type == "explicit":
        k = len(n.states or ())
        expected = n_rows * k
        if n.table.values is None or len(n.table.values) != expected:
            findings.append(
                Finding(
                    "cpt-shape",
                    n.name,
                    f"CPT for {n.name!r} needs {expected} values "
                    f"(got {0 if n.table.values is None else len(n.table.values)})",
                )
            )
        else:
            rows = np.asarray(n.table.values, dtype=float).reshape(n_rows, k)
            if np.any(rows < 0) or not np.all(np.isfinite(rows)):
                findings.append(Finding("cpt-negative", n.name, "CPT entries must be finite and >= 0"))
            elif not np.allclose(rows.sum(axis=1), 1.0, rtol=0.0, atol=ROW_SUM_TOL):
                worst = float(np.abs(rows.sum(axis=1) - 1.0).max())
                findings.append(
                    Finding(
                        "row-normalization",
                        n.name,
                        f"CPT rows for {n.name!r} must sum to 1 (worst deviation {worst:.3g})",
                    )
                )
    elif n.table.type == "expression":
        try:
            expand_expression(n, [doc.variable(p) for p in n.parents])
        except DocumentError as exc:
            findings.append(Finding("bad-expression", n.name, str(exc)))
    else:
        findings.append(Finding("unknown-table-type", n.name, f"unknown table type {n.table.type!r}"))
    return findings


# --- expression CPTs ---------------------------------------------------------


def _numeric_label(var: Variable, idx: int) -> float:
    label = var.states[idx]
    try:
        return float(label)
    except ValueError:
        raise DocumentError(
            f"parameter parent {var.name!r} has non-numeric state label {label!r}"
        ) from None


def _eval_expr(expr: Any, child: Variable, parents: Sequence[Variable], config: Mapping[str, int]) -> np.ndarray:
    if not isinstance(expr, dict) or "op" not in expr:
        raise DocumentError(f"malformed expression {expr!r}")
    op = expr["op"]
    by_name = {v.name: v for v in parents}

    def parent_var(key: str) -> Variable:
        name = expr.get(key)
        if name not in by_name:
            raise DocumentError(f"expression refers to {name!r}, not a declared parent")
        return by_name[name]

    if op == "constant":
        dist = np.zeros(child.cardinality)
        dist[child.index_of(str(expr.get("state")))] = 1.0
        return dist
    if op == "bernoulli":
        if child.cardinality != 2:
            raise DocumentError("bernoulli expression requires a binary child")
        param = parent_var("param")
        p = _numeric_label(param, config[param.name])
        if expr.get("complement", False):
            p = 1.0 - p
        if not 0.0 <= p <= 1.0:
            raise DocumentError(
                f"bernoulli parameter {p} from {param.name!r} is outside [0, 1]"
            )
        return np.array([1.0 - p, p])
    if op == "select":
        switch = parent_var("switch")
        cases = expr.get("cases")
        if not isinstance(cases, dict):
            raise DocumentError("select expression needs a cases map")
        label = switch.states[config[switch.name]]
        if label not in cases:
            raise DocumentError(
                f"select on {switch.name!r} has no case for state {label!r}"
            )
        return _eval_expr(cases[label], child, parents, config)
    if op == "parent":
        src = parent_var("name")
        dist = np.zeros(child.cardinality)
        dist[child.index_of(src.states[config[src.name]])] = 1.0
        return dist
    raise DocumentError(f"unknown expression op {op!r}")


def expand_expression(node: NodeSpec, parents: Sequence[Variable]) -> Cpt:
    """Materialize an expression table into an explicit CPT, row by row."""
    if node.table is None or node.table.type != "expression":
        raise DocumentError(f"node {node.name!r} has no expression table")
    child = node.variable()
    parents = tuple(parents)
    cards = [p.cardinality for p in parents]
    n_rows = int(np.prod(cards)) if cards else 1
    rows = np.zeros((n_rows, child.cardinality))
    for flat in range(n_rows):
        idx = np.unravel_index(flat, cards) if cards else ()
        config = {p.name: int(i) for p, i in zip(parents, idx)}
        rows[flat] = _eval_expr(node.table.expr, child, parents, config)
    return Cpt(child, parents, Factor(parents + (child,), rows.reshape(tuple(cards) + (child.cardinality,))))


def node_cpt(doc: NetworkDoc, node: NodeSpec) -> Cpt:
    """The explicit CPT of a chance node (expanding expressions as needed)."""
    if node.kind != CHANCE or node.table is None:
        raise DocumentError(f"node {node.name!r} has no CPT")
    parents = tuple(doc.variable(p) for p in node.parents)
    if node.table.type == "expression":
        return expand_expression(node, parents)
    child = node.variable()
    shape = tuple(p.cardinality for p in parents) + (child.cardinality,)
    values = np.asarray(node.table.values, dtype=float).reshape(shape)
    return Cpt(child, parents, Factor(parents + (child,), values))


def utility_factor(doc: NetworkDoc, node: NodeSpec) -> Factor:
    """Utility table as a factor over the node's parents (real-valued, unnormalized)."""
    if node.kind != UTILITY or node.table is None:
        raise DocumentError(f"node {node.name!r} is not a utility node")
    parents = tuple(doc.variable(p) for p in node.parents)
    shape = tuple(p.cardinality for p in parents)
    values = np.asarray(node.table.values, dtype=float).reshape(shape)
    return Factor(parents, values, signed=True)


# --- (de)serialization --------------------------------------------------------


def to_json_dict(doc: NetworkDoc) -> dict:
    nodes = []
    for n in doc.nodes:
        entry: dict[str, Any] = {"name": n.name, "kind": n.kind}
        if n.states is not None:
            entry["states"] = list(n.states)
        entry["parents"] = list(n.parents)
        if n.table is not None:
            entry["table"] = n.table.to_json()
        nodes.append(entry)
    return {"name": doc.name, "nodes": nodes, "decisionOrder": list(doc.decision_order)}


def serialize(doc: NetworkDoc) -> str:
    return json.dumps(to_json_dict(doc), indent=2) + "\n"


def _node_from_json(raw: Any) -> NodeSpec:
    if not isinstance(raw, dict) or "name" not in raw or "kind" not in raw:
        raise ParseError(f"malformed node entry: {raw!r}")
    kind = raw["kind"]
    if kind not in NODE_KINDS:
        raise ParseError(f"unknown node kind {kind!r} on node {raw['name']!r}")
    table = None
    if raw.get("table") is not None:
        t = raw["table"]
        ttype = t.get("type")
        if ttype in ("explicit", "utility"):
            if not isinstance(t.get("values"), list):
                raise ParseError(f"table of {raw['name']!r} needs a values array")
            table = TableSpec(ttype, values=tuple(float(x) for x in t["values"]))
        elif ttype == "expression":
            table = TableSpec("expression", expr=t.get("expr"))
        else:
            raise ParseError(f"unknown table type {ttype!r} on node {raw['name']!r}")
    states = raw.get("states")
    return NodeSpec(
        name=str(raw["name"]),
        kind=kind,
        states=tuple(str(s) for s in states) if states is not None else None,
        parents=tuple(str(p) for p in raw.get("parents", ())),
        table=table,
    )


def from_json_dict(data: Any) -> NetworkDoc:
    if not isinstance(data, dict) or "nodes" not in data:
        raise ParseError("network document must be an object with a nodes array")
    doc = NetworkDoc(
        name=str(data.get("name", "network")),
        nodes=tuple(_node_from_json(n) for n in data["nodes"]),
        decision_order=tuple(str(d) for d in data.get("decisionOrder", ())),
    )
    names = {n.name for n in doc.nodes}
    for n in doc.nodes:
        for p in n.parents:
            if p not in names:
                raise ParseError(f"node {n.name!r} references unknown parent {p!r}")
    return doc


def parse(text: str) -> NetworkDoc:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"syntax error: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    return from_json_dict(data)
