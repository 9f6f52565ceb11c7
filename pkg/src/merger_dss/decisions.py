"""Influence-diagram evaluation under perfect recall.

Decisions observe nothing but earlier decisions (no informational arcs from
chance nodes), so a policy is an action sequence and backward induction runs
over the sequence tree: expected utility of each full sequence is computed by
variable elimination, then maxima are folded back one decision at a time.
``enumerate_policies`` re-derives the same result by brute force over the full
joint table and serves as the test oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from . import enumeration
from .errors import DecisionError, GuardExceededError, ImpossibleEvidenceError
from .factors import Evidence, Factor, Variable, factor_marginalize, factor_multiply
from .network import (
    CHANCE,
    DECISION,
    UTILITY,
    NetworkDoc,
    NodeSpec,
    TableSpec,
    node_cpt,
    utility_factor,
)
from .oobn import FlatFinding, FlatNetwork

POLICY_GUARD = 1_000_000
NEAR_TIE_RATIO = 1e-2


@dataclass(frozen=True)
class DecisionProblem:
    """A flat network with decisions and additive utilities, plus any findings
    baked in by the model builder (e.g. forced stage-1 cooperation)."""

    net: NetworkDoc
    decision_order: tuple[str, ...]
    findings: tuple[FlatFinding, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "decision_order", tuple(self.decision_order))
        decisions = {n.name for n in self.net.nodes if n.kind == DECISION}
        if set(self.decision_order) != decisions:
            raise DecisionError(
                f"decisionOrder {list(self.decision_order)} must list exactly the "
                f"decision nodes {sorted(decisions)}"
            )

    @staticmethod
    def from_flat(flat: FlatNetwork) -> "DecisionProblem":
        return DecisionProblem(flat.net, flat.net.decision_order, flat.findings)

    def alternatives(self, decision: str) -> tuple[str, ...]:
        spec = self.net.node(decision)
        if spec.kind != DECISION:
            raise DecisionError(f"{decision!r} is not a decision node")
        return tuple(spec.states or ())


@dataclass(frozen=True)
class DecisionResult:
    meu: float
    first_decision_eus: tuple[tuple[str, float], ...]  # (alternative, EU) in state order
    optimal_policy: tuple[tuple[str, tuple[tuple[tuple[str, ...], str], ...]], ...]
    policies_evaluated: int | None = None

    def eu(self, alternative: str) -> float:
        for alt, value in self.first_decision_eus:
            if alt == alternative:
                return value
        raise DecisionError(f"no alternative {alternative!r} at the first decision")

    @property
    def optimal_first(self) -> str:
        best_alt, best = None, -np.inf
        for alt, value in self.first_decision_eus:
            if value > best:
                best_alt, best = alt, value
        return best_alt

    @property
    def near_tie(self) -> bool:
        values = sorted((v for _, v in self.first_decision_eus), reverse=True)
        if len(values) < 2:
            return False
        scale = max(abs(v) for v in values)
        if scale == 0.0:
            return True
        return (values[0] - values[1]) / scale < NEAR_TIE_RATIO

    def policy_map(self) -> dict[str, dict[tuple[str, ...], str]]:
        return {d: dict(rules) for d, rules in self.optimal_policy}


def _indicator(var: Variable, state: str) -> Factor:
    vals = np.zeros(var.cardinality)
    vals[var.index_of(state)] = 1.0
    return Factor((var,), vals)


def _eliminate_all(factors: Sequence[Factor]) -> float:
    """Sum out every variable, greedily eliminating the cheapest one first."""
    live = [f for f in factors if f.scope]
    scalar = 1.0
    for f in factors:
        if not f.scope:
            scalar *= float(f.values)
    while live:
        by_var: dict[str, list[int]] = {}
        vars_by_name: dict[str, Variable] = {}
        for i, f in enumerate(live):
            for v in f.scope:
                by_var.setdefault(v.name, []).append(i)
                vars_by_name[v.name] = v

        def cost(name: str) -> tuple[int, str]:
            names: set[str] = set()
            for i in by_var[name]:
                names.update(v.name for v in live[i].scope)
            size = 1
            for n in names:
                size *= vars_by_name[n].cardinality
            return (size, name)

        target = min(by_var, key=cost)
        involved = by_var[target]
        prod = live[involved[0]]
        for i in involved[1:]:
            prod = factor_multiply(prod, live[i])
        summed = factor_marginalize(prod, [target])
        live = [f for i, f in enumerate(live) if i not in set(involved)]
        if summed.scope:
            live.append(summed)
        else:
            scalar *= float(summed.values)
    return scalar


class _CompiledProblem:
    """Factors of a decision problem with decisions left symbolic."""

    def __init__(self, dp: DecisionProblem, evidence: Sequence[Evidence]):
        decisions = set(dp.decision_order)
        for e in evidence:
            if e.variable.name in decisions:
                raise DecisionError(
                    f"evidence on decision node {e.variable.name!r}; use fix_decision"
                )
        self.dp = dp
        self.chance_factors: list[Factor] = []
        self.utilities: list[Factor] = []
        self.decision_vars: dict[str, Variable] = {}
        for n in dp.net.nodes:
            if n.kind == CHANCE:
                self.chance_factors.append(node_cpt(dp.net, n).factor)
            elif n.kind == UTILITY:
                self.utilities.append(utility_factor(dp.net, n))
            else:
                self.decision_vars[n.name] = n.variable()
        vars_by_name = {n.name: n.variable() for n in dp.net.nodes if n.kind != UTILITY}
        self.evidence_factors: list[Factor] = []
        for f in dp.findings:
            var = vars_by_name[f.node]
            ev = (
                Evidence.hard(var, f.value)
                if f.kind == "hard"
                else Evidence.likelihood(var, f.value)
            )
            self.evidence_factors.append(ev.as_factor())
        for e in evidence:
            self.evidence_factors.append(e.as_factor())

    def sequence_eu(self, sequence: Sequence[str]) -> float:
        fixed = [
            _indicator(self.decision_vars[d], alt)
            for d, alt in zip(self.dp.decision_order, sequence)
        ]
        base = self.chance_factors + self.evidence_factors + fixed
        z = _eliminate_all(base)
        if z <= 0.0:
            return -np.inf
        total = 0.0
        for u in self.utilities:
            total += _eliminate_all(base + [u])
        return total / z


def _fold_sequence_tree(
    dp: DecisionProblem, eu_by_sequence: Mapping[tuple[str, ...], float]
) -> tuple[float, list[tuple[str, float]], list]:
    """Backward induction over the action-sequence tree.

    Ties break toward the lowest alternative index. Returns the MEU, the
    first-decision EUs under optimal continuation, and the per-decision policy
    keyed by information state (the tuple of earlier choices).
    """
    alts = [dp.alternatives(d) for d in dp.decision_order]
    policy: list[tuple[str, list[tuple[tuple[str, ...], str]]]] = [
        (d, []) for d in dp.decision_order
    ]

    def value(prefix: tuple[str, ...]) -> float:
        k = len(prefix)
        if k == len(dp.decision_order):
            return eu_by_sequence[prefix]
        best_alt, best = None, -np.inf
        for alt in alts[k]:
            v = value(prefix + (alt,))
            if v > best:
                best_alt, best = alt, v
        policy[k][1].append((prefix, best_alt))
        return best

    if not dp.decision_order:
        return eu_by_sequence[()], [], []
    first = [(alt, value((alt,))) for alt in alts[0]]
    best_alt, meu = None, -np.inf
    for alt, v in first:
        if v > meu:
            best_alt, meu = alt, v
    policy[0][1].append(((), best_alt))
    for _, rules in policy:
        rules.sort()
    return meu, first, policy


def _sequences(dp: DecisionProblem) -> list[tuple[str, ...]]:
    alts = [dp.alternatives(d) for d in dp.decision_order]
    count = 1
    for a in alts:
        count *= len(a)
    if count > POLICY_GUARD:
        raise GuardExceededError(f"policy space has {count} sequences (> {POLICY_GUARD})")
    return [tuple(seq) for seq in itertools.product(*alts)]


def evaluate(dp: DecisionProblem, evidence: Sequence[Evidence] = ()) -> DecisionResult:
    """Exact MEU by backward induction; sequence expectations run through
    variable elimination on the problem's factors."""
    compiled = _CompiledProblem(dp, evidence)
    eus = {seq: compiled.sequence_eu(seq) for seq in _sequences(dp)}
    if all(v == -np.inf for v in eus.values()):
        raise ImpossibleEvidenceError("evidence has probability zero for every policy")
    meu, first, policy = _fold_sequence_tree(dp, eus)
    return DecisionResult(
        meu=meu,
        first_decision_eus=tuple(first),
        optimal_policy=tuple((d, tuple(rules)) for d, rules in policy),
    )


def fix_decision(dp: DecisionProblem, decision: str, alternative: str) -> DecisionProblem:
    """Convert one decision into a deterministic chance node."""
    spec = dp.net.node(decision)
    if spec.kind != DECISION:
        raise DecisionError(f"{decision!r} is not a decision node")
    states = spec.states or ()
    if alternative not in states:
        raise DecisionError(
            f"decision {decision!r} has no alternative {alternative!r}; "
            f"alternatives: {list(states)}"
        )
    row = [1.0 if s == alternative else 0.0 for s in states]
    fixed = NodeSpec(
        decision, CHANCE, states=states, parents=(), table=TableSpec("explicit", values=tuple(row))
    )
    net = dp.net.with_node_replaced(fixed)
    net = replace(net, decision_order=tuple(d for d in net.decision_order if d != decision))
    return DecisionProblem(
        net, tuple(d for d in dp.decision_order if d != decision), dp.findings
    )


def enumerate_policies(dp: DecisionProblem, evidence: Sequence[Evidence] = ()) -> DecisionResult:
    """Test oracle: exhaust all action sequences, computing each expected
    utility by full-joint enumeration."""
    sequences = _sequences(dp)
    vars_by_name = {n.name: n.variable() for n in dp.net.nodes if n.kind != UTILITY}
    all_evidence = list(evidence)
    for f in dp.findings:
        var = vars_by_name[f.node]
        all_evidence.append(
            Evidence.hard(var, f.value) if f.kind == "hard" else Evidence.likelihood(var, f.value)
        )

    eus: dict[tuple[str, ...], float] = {}
    for seq in sequences:
        fixed_dp = dp
        for d, alt in zip(dp.decision_order, seq):
            fixed_dp = fix_decision(fixed_dp, d, alt)
        chance_only = NetworkDoc(
            fixed_dp.net.name,
            tuple(n for n in fixed_dp.net.nodes if n.kind == CHANCE),
            (),
        )
        utilities = [
            utility_factor(fixed_dp.net, n)
            for n in fixed_dp.net.nodes
            if n.kind == UTILITY
        ]
        try:
            eus[seq] = enumeration.enumerate_expectation(chance_only, utilities, all_evidence)
        except ImpossibleEvidenceError:
            eus[seq] = -np.inf
    if all(v == -np.inf for v in eus.values()):
        raise ImpossibleEvidenceError("evidence has probability zero for every policy")
    meu, first, policy = _fold_sequence_tree(dp, eus)
    return DecisionResult(
        meu=meu,
        first_decision_eus=tuple(first),
        optimal_policy=tuple((d, tuple(rules)) for d, rules in policy),
        policies_evaluated=len(sequences),
    )
