"""Brute-force oracles: full-joint enumeration, kept deliberately independent
of the junction-tree engine so tests can check one against the other."""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import GuardExceededError, ImpossibleEvidenceError
from .factors import Evidence, Factor, Variable, factor_multiply
from .network import CHANCE, DECISION, NetworkDoc, node_cpt

JOINT_CELL_GUARD = 4_000_000


def joint_table(doc: NetworkDoc, evidence: Sequence[Evidence] = ()) -> Factor:
    """The full joint over every chance variable, times any evidence weights.

    Decision and utility nodes are rejected; convert or strip them first.
    """
    for n in doc.nodes:
        if n.kind != CHANCE:
            raise GuardExceededError(
                f"joint enumeration needs a chance-only network (found {n.kind} {n.name!r})"
            )
    cells = 1
    for n in doc.nodes:
        cells *= len(n.states or ())
    if cells > JOINT_CELL_GUARD:
        raise GuardExceededError(f"joint would have {cells} cells (> {JOINT_CELL_GUARD})")
    joint = Factor.unit()
    for n in doc.nodes:
        joint = factor_multiply(joint, node_cpt(doc, n).factor)
    for e in evidence:
        joint = factor_multiply(joint, e.as_factor())
    return joint


def enumerate_marginals(
    doc: NetworkDoc,
    evidence: Sequence[Evidence] = (),
    targets: Iterable[str] | None = None,
) -> tuple[dict[str, np.ndarray], float]:
    """Posterior marginals and P(evidence) by summing the full joint."""
    joint = joint_table(doc, evidence)
    p_evidence = float(joint.values.sum())
    if p_evidence <= 0.0:
        raise ImpossibleEvidenceError("evidence has probability zero (enumeration)")
    names = [v.name for v in joint.scope]
    wanted = list(targets) if targets is not None else names
    out: dict[str, np.ndarray] = {}
    for name in wanted:
        axis = names.index(name)
        keep = joint.values.sum(axis=tuple(i for i in range(len(names)) if i != axis))
        out[name] = keep / p_evidence
    return out, p_evidence


def enumerate_expectation(
    doc: NetworkDoc, utilities: Sequence[Factor], evidence: Sequence[Evidence] = ()
) -> float:
    """E[sum of utility tables | evidence] by full-joint enumeration."""
    joint = joint_table(doc, evidence)
    z = float(joint.values.sum())
    if z <= 0.0:
        raise ImpossibleEvidenceError("evidence has probability zero (enumeration)")
    total = 0.0
    for u in utilities:
        weighted = factor_multiply(joint, u)
        total += float(weighted.values.sum())
    return total / z
