"""Constraint-based structure learning with logical edge constraints.

A PC-style search: skeleton by conditional-independence tests with growing
conditioning sets (stable variant, adjacency snapshot per level), then
v-structure orientation and Meek rules. Logical constraints (required edges,
forbidden directed edges, tier order) are enforced throughout: forbidden or
tier-violating directions are never produced, required edges are never
removed. Ambiguities the interactive original would hand to the user are
resolved deterministically: constraints first, tier order next, lexicographic
last.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import stats

from ..errors import ConstraintError, InsufficientDataError, ParseError
from ..network import CHANCE, NetworkDoc, NodeSpec
from .dataset import MISSING, CaseDataset

MIN_EXPECTED = 5.0


@dataclass(frozen=True)
class ConstraintSet:
    required: tuple[tuple[str, str], ...] = ()
    forbidden: tuple[tuple[str, str], ...] = ()
    tiers: tuple[tuple[str, ...], ...] = ()
    within_tier_free: bool = True

    def __post_init__(self):
        object.__setattr__(self, "required", tuple(tuple(e) for e in self.required))
        object.__setattr__(self, "forbidden", tuple(tuple(e) for e in self.forbidden))
        object.__setattr__(self, "tiers", tuple(tuple(t) for t in self.tiers))
        seen: set[str] = set()
        for tier in self.tiers:
            for name in tier:
                if name in seen:
                    raise ConstraintError(f"{name!r} appears in two tiers")
                seen.add(name)
        for edge in self.required:
            if edge in self.forbidden:
                raise ConstraintError(f"edge {edge} is both required and forbidden")
            if not self.direction_allowed(*edge):
                raise ConstraintError(f"required edge {edge} violates the tier order")

    def tier_of(self, name: str) -> int | None:
        for i, tier in enumerate(self.tiers):
            if name in tier:
                return i
        return None

    def direction_allowed(self, u: str, v: str) -> bool:
        if (u, v) in self.forbidden:
            return False
        tu, tv = self.tier_of(u), self.tier_of(v)
        if tu is not None and tv is not None:
            if tu > tv:
                return False
            if tu == tv and not self.within_tier_free:
                return False
        return True

    def adjacency_allowed(self, u: str, v: str) -> bool:
        return self.direction_allowed(u, v) or self.direction_allowed(v, u)


def parse_constraints(text: str) -> ConstraintSet:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"syntax error: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    return constraints_from_json(data)


def constraints_from_json(data: Any) -> ConstraintSet:
    if not isinstance(data, dict):
        raise ParseError("constraint file must be a JSON object")
    return ConstraintSet(
        required=tuple((str(a), str(b)) for a, b in data.get("required", ())),
        forbidden=tuple((str(a), str(b)) for a, b in data.get("forbidden", ())),
        tiers=tuple(tuple(str(n) for n in tier) for tier in data.get("tiers", ())),
        within_tier_free=bool(data.get("withinTierFree", True)),
    )


def read_constraints(path: str | Path) -> ConstraintSet:
    return parse_constraints(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class Pdag:
    nodes: tuple[str, ...]
    skeleton: tuple[tuple[str, str], ...]  # sorted pairs
    directed: tuple[tuple[str, str], ...]  # every skeleton edge, oriented
    compelled: tuple[tuple[str, str], ...]  # subset of directed fixed by the data/constraints

    def parents_of(self, name: str) -> tuple[str, ...]:
        return tuple(sorted(a for a, b in self.directed if b == name))

    def to_structure(self, schema: Sequence) -> NetworkDoc:
        """Chance-only structure (no tables) over the dataset schema."""
        by_name = {v.name: v for v in schema}
        nodes = []
        for name in self.nodes:
            var = by_name[name]
            nodes.append(
                NodeSpec(name, CHANCE, states=var.states, parents=self.parents_of(name))
            )
        return NetworkDoc("learned", tuple(nodes), ())


# --- chi-square conditional independence ------------------------------------


def chi_square_ci_test(
    data: CaseDataset,
    x: str,
    y: str,
    given: Sequence[str] = (),
    min_expected: float = MIN_EXPECTED,
) -> tuple[float, int, float]:
    """Pearson chi-square of x ⊥ y within each stratum of `given`, pooled.

    Rows missing any involved variable are dropped (listwise deletion).
    Strata with sparse expected counts are summed into one pooled table.
    Raises InsufficientDataError when no stratum carries a testable table.
    """
    xi = data.column_index(x)
    yi = data.column_index(y)
    gi = [data.column_index(g) for g in given]
    cols = [xi, yi] + gi
    rows = data.rows[:, cols]
    keep = np.all(rows != MISSING, axis=1)
    rows = rows[keep].astype(np.int64)
    r = data.schema[xi].cardinality
    s = data.schema[yi].cardinality
    if rows.shape[0] == 0:
        raise InsufficientDataError(f"no complete rows for test {x} _||_ {y} | {list(given)}")

    if gi:
        g_cards = [data.schema[data.column_index(g)].cardinality for g in given]
        strata_codes = np.ravel_multi_index(
            tuple(rows[:, 2 + k] for k in range(len(gi))), tuple(g_cards)
        )
    else:
        strata_codes = np.zeros(rows.shape[0], dtype=np.int64)

    tables = []
    for code in np.unique(strata_codes):
        mask = strata_codes == code
        flat = rows[mask, 0] * s + rows[mask, 1]
        tables.append(np.bincount(flat, minlength=r * s).reshape(r, s).astype(float))

    def trimmed(table: np.ndarray) -> np.ndarray | None:
        t = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
        if t.shape[0] < 2 or t.shape[1] < 2:
            return None
        return t

    def expected(table: np.ndarray) -> np.ndarray:
        return np.outer(table.sum(axis=1), table.sum(axis=0)) / table.sum()

    stat, dof = 0.0, 0
    pooled = np.zeros((r, s))
    for table in tables:
        t = trimmed(table)
        if t is None or np.any(expected(t) < min_expected):
            pooled += table
            continue
        e = expected(t)
        stat += float(((t - e) ** 2 / e).sum())
        dof += (t.shape[0] - 1) * (t.shape[1] - 1)
    if pooled.sum() > 0:
        t = trimmed(pooled)
        if t is not None:
            e = expected(t)
            if np.all(e >= min_expected) or dof == 0:
                stat += float(((t - e) ** 2 / e).sum())
                dof += (t.shape[0] - 1) * (t.shape[1] - 1)
    if dof == 0:
        raise InsufficientDataError(
            f"every stratum degenerate for test {x} _||_ {y} | {list(given)}"
        )
    p_value = float(stats.chi2.sf(stat, dof))
    return stat, dof, p_value


# --- PC-style search ----------------------------------------------------------


def _pair(u: str, v: str) -> tuple[str, str]:
    return (u, v) if u <= v else (v, u)


def learn_structure(
    data: CaseDataset,
    constraints: ConstraintSet | None = None,
    alpha: float = 0.05,
    max_cond: int = 3,
) -> Pdag:
    constraints = constraints or ConstraintSet()
    names = [v.name for v in data.schema]
    if len(names) < 2:
        raise ConstraintError("need at least 2 variables")
    required_pairs = {_pair(*e) for e in constraints.required}

    adj: dict[str, set[str]] = {n: set() for n in names}
    for u, v in itertools.combinations(names, 2):
        if constraints.adjacency_allowed(u, v):
            adj[u].add(v)
            adj[v].add(u)
    for u, v in constraints.required:
        if u not in adj or v not in adj[u]:
            adj.setdefault(u, set()).add(v)
            adj.setdefault(v, set()).add(u)

    sepsets: dict[tuple[str, str], tuple[str, ...]] = {}
    for level in range(0, max_cond + 1):
        snapshot = {n: sorted(adj[n]) for n in names}  # PC-stable
        for u, v in itertools.combinations(names, 2):
            if v not in adj[u] or _pair(u, v) in required_pairs:
                continue
            removed = False
            for base in (snapshot[u], snapshot[v]):
                pool = [w for w in base if w not in (u, v)]
                if len(pool) < level:
                    continue
                for cond in itertools.combinations(pool, level):
                    try:
                        _, _, p = chi_square_ci_test(data, u, v, cond)
                    except InsufficientDataError:
                        continue  # cannot rule the edge out; keep it
                    if p > alpha:
                        adj[u].discard(v)
                        adj[v].discard(u)
                        sepsets[_pair(u, v)] = cond
                        removed = True
                        break
                if removed:
                    break

    skeleton = sorted(_pair(u, v) for u in names for v in adj[u] if u < v)
    directed: dict[tuple[str, str], bool] = {}  # (from, to) -> compelled

    def is_oriented(u: str, v: str) -> bool:
        return (u, v) in directed or (v, u) in directed

    def try_orient(u: str, v: str, compelled: bool) -> bool:
        if is_oriented(u, v) or not constraints.direction_allowed(u, v):
            return False
        if _creates_cycle(directed, u, v):
            return False
        directed[(u, v)] = compelled
        return True

    # Constraints first: required edges, then tier-forced directions.
    for u, v in constraints.required:
        if not try_orient(u, v, True) and (u, v) not in directed:
            raise ConstraintError(f"cannot orient required edge {(u, v)}")
    for u, v in skeleton:
        if is_oriented(u, v):
            continue
        fwd = constraints.direction_allowed(u, v)
        back = constraints.direction_allowed(v, u)
        if fwd and not back:
            try_orient(u, v, True)
        elif back and not fwd:
            try_orient(v, u, True)

    # V-structures: unshielded triples u - w - v with w outside sepset(u, v).
    for w in names:
        for u, v in itertools.combinations(sorted(adj[w]), 2):
            if v in adj[u] or _pair(u, v) not in sepsets:
                continue
            if w in sepsets[_pair(u, v)]:
                continue
            if (w, u) not in directed and (w, v) not in directed:
                try_orient(u, w, True)
                try_orient(v, w, True)

    _meek_closure(names, adj, directed, constraints)

    # Remaining reversible edges: tier order already exhausted, so lexicographic.
    while True:
        undecided = [e for e in skeleton if not is_oriented(*e)]
        if not undecided:
            break
        u, v = undecided[0]
        if not try_orient(u, v, False):
            if not try_orient(v, u, False):
                raise ConstraintError(f"cannot orient edge {(u, v)} without contradiction")
        _meek_closure(names, adj, directed, constraints, compelled=False)

    pdag = Pdag(
        nodes=tuple(names),
        skeleton=tuple(skeleton),
        directed=tuple(sorted(directed)),
        compelled=tuple(sorted(e for e, c in directed.items() if c)),
    )
    _assert_constraints(pdag, constraints)
    return pdag


def _creates_cycle(directed: dict[tuple[str, str], bool], u: str, v: str) -> bool:
    # Would u -> v close a directed path v ~> u?
    children: dict[str, list[str]] = {}
    for a, b in directed:
        children.setdefault(a, []).append(b)
    stack, seen = [v], set()
    while stack:
        cur = stack.pop()
        if cur == u:
            return True
        if cur in seen:
            continue
        seen.add(cur)
        stack.extend(children.get(cur, ()))
    return False


def _meek_closure(
    names: Sequence[str],
    adj: dict[str, set[str]],
    directed: dict[tuple[str, str], bool],
    constraints: ConstraintSet,
    compelled: bool = True,
) -> None:
    """Meek rules 1-4, skipping any orientation the constraints disallow."""

    def oriented(u, v):
        return (u, v) in directed or (v, u) in directed

    def orient(u, v) -> bool:
        if oriented(u, v) or not constraints.direction_allowed(u, v):
            return False
        if _creates_cycle(directed, u, v):
            return False
        directed[(u, v)] = compelled
        return True

    changed = True
    while changed:
        changed = False
        undirected = [
            (u, v)
            for u in names
            for v in sorted(adj[u])
            if u < v and not oriented(u, v)
        ]
        for u, v in undirected:
            for a, b in ((u, v), (v, u)):
                # R1: c -> a, c not adjacent to b  =>  a -> b
                if any(
                    (c, a) in directed and b not in adj[c] and c != b
                    for c in sorted(adj[a])
                ):
                    if orient(a, b):
                        changed = True
                        break
                # R2: a -> c -> b  =>  a -> b
                if any(
                    (a, c) in directed and (c, b) in directed for c in sorted(adj[a] & adj[b])
                ):
                    if orient(a, b):
                        changed = True
                        break
                # R3: a - c -> b and a - d -> b, c/d nonadjacent  =>  a -> b
                mids = [
                    c
                    for c in sorted(adj[a] & adj[b])
                    if not oriented(a, c) and (c, b) in directed
                ]
                if any(
                    c2 not in adj[c1] and c1 != c2
                    for c1 in mids
                    for c2 in mids
                ):
                    if orient(a, b):
                        changed = True
                        break
                # R4: a - d -> c -> b with d adjacent to b  =>  a -> b
                hit = False
                for d in sorted(adj[a]):
                    if oriented(a, d) or d == b:
                        continue
                    for c in sorted(adj[b] & adj[d]):
                        if (d, c) in directed and (c, b) in directed:
                            hit = True
                            break
                    if hit:
                        break
                if hit and orient(a, b):
                    changed = True
                    break
            if changed:
                break


def _assert_constraints(pdag: Pdag, constraints: ConstraintSet) -> None:
    directed = set(pdag.directed)
    for edge in constraints.required:
        if tuple(edge) not in directed:
            raise ConstraintError(f"required edge {edge} missing from the result")
    for u, v in directed:
        if not constraints.direction_allowed(u, v):
            raise ConstraintError(f"produced edge {(u, v)} violates the constraints")
