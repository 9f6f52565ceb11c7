"""Object-oriented composition: classes, instances, identity links, flattening.

A class is a network fragment plus an interface of input nodes (placeholders
bound from outside) and output nodes (ordinary body nodes other instances may
bind to). Flattening compiles the instance tree into one NetworkDoc with
dot-qualified names; identity links are compiled by merging the input node
with its source, not by inserting equality CPTs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import CompositionError, ParseError, UnknownNodeError
from . import network
from .network import CHANCE, DECISION, NetworkDoc, NodeSpec, TableSpec


@dataclass(frozen=True)
class InputDecl:
    name: str
    states: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))


@dataclass(frozen=True)
class InstanceDecl:
    instance_name: str
    class_name: str
    bindings: tuple[tuple[str, str], ...] = ()  # input node -> qualified source

    def __post_init__(self):
        object.__setattr__(self, "bindings", tuple(tuple(b) for b in self.bindings))

    def binding_map(self) -> dict[str, str]:
        return dict(self.bindings)


@dataclass(frozen=True)
class ClassDoc:
    name: str
    body: NetworkDoc
    inputs: tuple[InputDecl, ...] = ()
    outputs: tuple[str, ...] = ()
    instances: tuple[InstanceDecl, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "instances", tuple(self.instances))

    def input(self, name: str) -> InputDecl:
        for decl in self.inputs:
            if decl.name == name:
                return decl
        raise CompositionError(f"class {self.name!r} has no input {name!r}")


@dataclass(frozen=True)
class FlatFinding:
    """Evidence baked into a flat network (e.g. a forced stage-1 move)."""

    node: str
    kind: str  # "hard" | "likelihood"
    value: Any  # state label or weight tuple


@dataclass(frozen=True)
class FlatNetwork:
    """A compiled class tree: a plain NetworkDoc with provenance back to the
    instance/class structure and the alias map left by identity-link merging."""

    net: NetworkDoc
    provenance: tuple[tuple[str, tuple[str, str]], ...] = ()
    aliases: tuple[tuple[str, str], ...] = ()
    findings: tuple[FlatFinding, ...] = ()

    def alias_map(self) -> dict[str, str]:
        return dict(self.aliases)

    def resolve(self, name: str) -> str:
        """Resolve a (possibly merged-away) node name to its flat node."""
        seen = set()
        aliases = self.alias_map()
        while name in aliases:
            if name in seen:
                raise CompositionError(f"alias cycle at {name!r}")
            seen.add(name)
            name = aliases[name]
        if not self.net.has_node(name):
            raise UnknownNodeError(f"no node named {name!r} in the flattened network")
        return name

    def with_finding(self, finding: FlatFinding) -> "FlatNetwork":
        kept = tuple(f for f in self.findings if f.node != finding.node)
        return replace(self, findings=kept + (finding,))

    def without_finding(self, node: str) -> "FlatNetwork":
        return replace(self, findings=tuple(f for f in self.findings if f.node != node))


def _uniform_cpt(states: Sequence[str]) -> TableSpec:
    k = len(states)
    return TableSpec("explicit", values=tuple([1.0 / k] * k))


def _rename_expr(expr: Any, rename: Mapping[str, str]) -> Any:
    """Rewrite parent references inside an expression table after renaming."""
    if not isinstance(expr, dict):
        return expr
    out = dict(expr)
    for key in ("param", "switch", "name"):
        if key in out and isinstance(out[key], str):
            out[key] = rename.get(out[key], out[key])
    if isinstance(out.get("cases"), dict):
        out["cases"] = {k: _rename_expr(v, rename) for k, v in out["cases"].items()}
    return out


def _rename_node(n: NodeSpec, rename: Mapping[str, str]) -> NodeSpec:
    table = n.table
    if table is not None and table.type == "expression":
        table = TableSpec("expression", expr=_rename_expr(table.expr, rename))
    return replace(
        n,
        name=rename.get(n.name, n.name),
        parents=tuple(rename.get(p, p) for p in n.parents),
        table=table,
    )


def _qualify(name: str, prefix: str) -> str:
    return f"{prefix}.{name}" if prefix else name


def _check_names(cls: ClassDoc) -> None:
    for n in cls.body.nodes:
        if "." in n.name:
            raise CompositionError(f"body node {n.name!r} of class {cls.name!r} contains '.'")
    for decl in cls.inputs:
        if cls.body.has_node(decl.name):
            raise CompositionError(
                f"input {decl.name!r} of class {cls.name!r} collides with a body node"
            )
    for out in cls.outputs:
        if not cls.body.has_node(out):
            raise CompositionError(f"output {out!r} of class {cls.name!r} is not a body node")


def _instance_order(cls: ClassDoc) -> list[InstanceDecl]:
    """Declaration order, with a cycle check over instance-to-instance bindings."""
    deps: dict[str, set[str]] = {}
    names = {inst.instance_name for inst in cls.instances}
    for inst in cls.instances:
        used = set()
        for _, src in inst.bindings:
            head = src.split(".", 1)[0]
            if head in names and head != inst.instance_name:
                used.add(head)
            elif head == inst.instance_name:
                raise CompositionError(
                    f"instance {inst.instance_name!r} binds an input to itself"
                )
        deps[inst.instance_name] = used
    seen: set[str] = set()
    done: set[str] = set()

    def visit(name: str) -> None:
        if name in done:
            return
        if name in seen:
            raise CompositionError(f"instance binding cycle involving {name!r}")
        seen.add(name)
        for d in sorted(deps[name]):
            visit(d)
        done.add(name)

    for inst in cls.instances:
        visit(inst.instance_name)
    return list(cls.instances)


def flatten(root: ClassDoc, registry: Mapping[str, ClassDoc] | None = None) -> FlatNetwork:
    """Compile a class tree into a single flat network.

    Noninput nodes are copied verbatim per instance. A bound input is merged
    with its source node (identity link); an unbound input becomes a uniform
    root so the flat network is always self-contained.
    """
    registry = dict(registry or {})
    registry.setdefault(root.name, root)
    _check_names(root)

    nodes: list[NodeSpec] = list(root.body.nodes)
    decision_order: list[str] = list(root.body.decision_order)
    provenance: list[tuple[str, tuple[str, str]]] = [
        (n.name, ("", n.name)) for n in root.body.nodes
    ]
    aliases: dict[str, str] = {}
    findings: list[FlatFinding] = []
    top_names = {n.name for n in root.body.nodes}

    for inst in _instance_order(root):
        cls = registry.get(inst.class_name)
        if cls is None:
            raise CompositionError(f"unresolved class {inst.class_name!r}")
        if "." in inst.instance_name:
            raise CompositionError(f"instance name {inst.instance_name!r} contains '.'")
        # Compositionality: a class containing instances is flattened first.
        sub = flatten(cls, registry) if cls.instances else None
        sub_net = sub.net if sub else cls.body
        if sub:
            for alias, target in sub.aliases:
                aliases[_qualify(alias, inst.instance_name)] = _qualify(
                    target, inst.instance_name
                )
            for f in sub.findings:
                findings.append(replace(f, node=_qualify(f.node, inst.instance_name)))
            for name, (ipath, cnode) in sub.provenance:
                provenance.append(
                    (
                        _qualify(name, inst.instance_name),
                        (_qualify(ipath, inst.instance_name) if ipath else inst.instance_name, cnode),
                    )
                )
        else:
            for n in cls.body.nodes:
                provenance.append((_qualify(n.name, inst.instance_name), (inst.instance_name, n.name)))

        bindings = inst.binding_map()
        unknown = set(bindings) - {d.name for d in cls.inputs}
        if unknown:
            raise CompositionError(
                f"instance {inst.instance_name!r} binds unknown inputs {sorted(unknown)}"
            )
        rename: dict[str, str] = {}
        for decl in cls.inputs:
            qualified = _qualify(decl.name, inst.instance_name)
            src = bindings.get(decl.name)
            if src is None:
                # Unbound input: materialize as a uniform root.
                rename[decl.name] = qualified
                nodes.append(
                    NodeSpec(qualified, CHANCE, states=decl.states, table=_uniform_cpt(decl.states))
                )
                provenance.append((qualified, (inst.instance_name, decl.name)))
                continue
            src_states = _source_states(src, root, registry, top_names)
            if src_states != decl.states:
                raise CompositionError(
                    f"identity link {inst.instance_name}.{decl.name} <- {src}: "
                    f"state lists differ ({list(decl.states)} vs {list(src_states)})"
                )
            rename[decl.name] = src
            aliases[qualified] = src

        body_names = {n.name for n in sub_net.nodes}
        for name in body_names:
            rename.setdefault(name, _qualify(name, inst.instance_name))
        for n in sub_net.nodes:
            nodes.append(_rename_node(n, rename))
        decision_order.extend(rename[d] for d in sub_net.decision_order)

    flat_doc = NetworkDoc(name=root.name, nodes=tuple(nodes), decision_order=tuple(decision_order))
    seen: set[str] = set()
    for n in flat_doc.nodes:
        if n.name in seen:
            raise CompositionError(f"flattening produced duplicate node {n.name!r}")
        seen.add(n.name)
    return FlatNetwork(
        net=flat_doc,
        provenance=tuple(provenance),
        aliases=tuple(sorted(aliases.items())),
        findings=tuple(findings),
    )


def _source_states(
    src: str, root: ClassDoc, registry: Mapping[str, ClassDoc], top_names: set[str]
) -> tuple[str, ...]:
    head, _, rest = src.partition(".")
    if not rest:
        if src not in top_names:
            raise CompositionError(f"binding source {src!r} is not a top-level node")
        return tuple(root.body.node(src).states or ())
    inst = next((i for i in root.instances if i.instance_name == head), None)
    if inst is None:
        raise CompositionError(f"binding source {src!r} references unknown instance {head!r}")
    cls = registry.get(inst.class_name)
    if cls is None:
        raise CompositionError(f"unresolved class {inst.class_name!r}")
    if rest not in cls.outputs:
        raise CompositionError(
            f"binding source {src!r}: {rest!r} is not an output of class {cls.name!r}"
        )
    spec = cls.body.node(rest)
    return tuple(spec.states or ())


# --- repeated-game unrolling ---------------------------------------------------

FIRM1_STATES = ("defect", "cooperate", "stop")
STOP_STATES = ("0", "1")
STAGE_PREFIX = "Duopoly"


def stage_name(stage: int, node: str) -> str:
    return f"{STAGE_PREFIX}_{stage}.{node}"


def unroll_repeated(
    stage_class: ClassDoc,
    aa_class: ClassDoc,
    n_stages: int,
    coupling: str = "shared-AA",
) -> FlatNetwork:
    """Chain nStages+1 stage instances (Firm1* -> next Firm1) with the stop
    inputs bound to the AA class's intervention output per coupling mode."""
    if n_stages < 1:
        raise CompositionError("n_stages must be >= 1")
    if coupling not in ("shared-AA", "per-stage-AA"):
        raise CompositionError(f"unknown coupling {coupling!r}")
    for required in ("Firm1", "stop?"):
        stage_class.input(required)
    if "Firm1*" not in stage_class.outputs:
        raise CompositionError("stage class must expose the Firm1* output")
    if not aa_class.outputs:
        raise CompositionError("AA class must expose its intervention output")
    stop_out = aa_class.outputs[0]

    m = n_stages + 1
    init = NodeSpec(
        "Firm1_init",
        CHANCE,
        states=FIRM1_STATES,
        table=TableSpec("explicit", values=(0.5, 0.5, 0.0)),
    )
    instances: list[InstanceDecl] = []
    n_aa = 1 if coupling == "shared-AA" else m
    for k in range(1, n_aa + 1):
        instances.append(InstanceDecl(f"AA_{k}", aa_class.name, ()))
    for k in range(1, m + 1):
        firm1_src = "Firm1_init" if k == 1 else f"{STAGE_PREFIX}_{k - 1}.Firm1*"
        aa_idx = 1 if coupling == "shared-AA" else k
        instances.append(
            InstanceDecl(
                f"{STAGE_PREFIX}_{k}",
                stage_class.name,
                (("Firm1", firm1_src), ("stop?", f"AA_{aa_idx}.{stop_out}")),
            )
        )
    root = ClassDoc(
        name=f"repeated-{stage_class.name}-{n_stages}x-{coupling}",
        body=NetworkDoc(name="root", nodes=(init,)),
        instances=tuple(instances),
    )
    return flatten(root, {stage_class.name: stage_class, aa_class.name: aa_class})


def set_stage_override(
    flat: FlatNetwork, stage: int, node: str, hard_state: str
) -> FlatNetwork:
    """Bake a hard finding onto a stage-qualified node (e.g. force stage-1
    cooperation); the finding travels with the network and is applied by
    sessions and evaluators."""
    target = flat.resolve(stage_name(stage, node))
    spec = flat.net.node(target)
    if spec.states is None or hard_state not in spec.states:
        raise UnknownNodeError(
            f"node {target!r} has no state {hard_state!r}; states: {list(spec.states or ())}"
        )
    return flat.with_finding(FlatFinding(target, "hard", hard_state))


def retract_stage_override(flat: FlatNetwork, stage: int, node: str) -> FlatNetwork:
    target = flat.resolve(stage_name(stage, node))
    return flat.without_finding(target)


# --- (de)serialization ----------------------------------------------------------


def class_to_json_dict(cls: ClassDoc) -> dict:
    data = network.to_json_dict(cls.body)
    data["name"] = cls.name
    data["interface"] = {
        "inputs": [{"name": d.name, "states": list(d.states)} for d in cls.inputs],
        "outputs": list(cls.outputs),
    }
    data["instances"] = [
        {"name": i.instance_name, "class": i.class_name, "bind": dict(i.bindings)}
        for i in cls.instances
    ]
    return data


def serialize_class(cls: ClassDoc) -> str:
    return json.dumps(class_to_json_dict(cls), indent=2) + "\n"


def class_from_json_dict(data: Any) -> ClassDoc:
    body = network.from_json_dict({k: v for k, v in data.items() if k not in ("interface", "instances")})
    iface = data.get("interface", {})
    inputs = tuple(
        InputDecl(str(d["name"]), tuple(str(s) for s in d["states"]))
        for d in iface.get("inputs", ())
    )
    instances = tuple(
        InstanceDecl(
            str(i["name"]),
            str(i["class"]),
            tuple(sorted((str(k), str(v)) for k, v in i.get("bind", {}).items())),
        )
        for i in data.get("instances", ())
    )
    return ClassDoc(
        name=str(data.get("name", "class")),
        body=body,
        inputs=inputs,
        outputs=tuple(str(o) for o in iface.get("outputs", ())),
        instances=instances,
    )


def parse_class(text: str) -> ClassDoc:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"syntax error: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    return class_from_json_dict(data)
