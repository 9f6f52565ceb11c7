"""Discrete variables and factor algebra.

A Factor is a nonnegative real table over an ordered scope of discrete
variables. Values are stored as a C-ordered ndarray whose axes follow the
scope, so the flat view is row-major with the first scope variable varying
slowest and the last varying fastest. That cell order is the contract for
every file format and oracle in this package.

All operations are pure: factors are immutable after construction and safe
to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EvidenceError,
    FactorError,
    ImpossibleEvidenceError,
    ScopeError,
    StateMismatchError,
)

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class Variable:
    """A named discrete variable with a fixed, ordered list of state labels."""

    name: str
    states: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        if not self.name:
            raise FactorError("variable name must be nonempty")
        if len(self.states) < 2:
            raise FactorError(f"variable {self.name!r} needs at least 2 states")
        if len(set(self.states)) != len(self.states):
            raise FactorError(f"variable {self.name!r} has duplicate state labels")

    @property
    def cardinality(self) -> int:
        return len(self.states)

    def index_of(self, label: str) -> int:
        try:
            return self.states.index(label)
        except ValueError:
            raise StateMismatchError(
                f"variable {self.name!r} has no state {label!r}; states are {list(self.states)}"
            ) from None

    def __repr__(self):
        return f"Variable({self.name!r}, {len(self.states)} states)"


def _check_scope_consistency(vars_a: Sequence[Variable], vars_b: Sequence[Variable]) -> None:
    by_name = {v.name: v for v in vars_a}
    for v in vars_b:
        other = by_name.get(v.name)
        if other is not None and other.states != v.states:
            raise StateMismatchError(
                f"variable {v.name!r} appears with mismatched state lists: "
                f"{list(other.states)} vs {list(v.states)}"
            )


class Factor:
    """Nonnegative table over an ordered variable scope.

    Utility tables opt out of the nonnegativity check (`signed=True`); the
    flag survives multiplication and marginalization.
    """

    __slots__ = ("scope", "values", "signed")

    def __init__(self, scope: Sequence[Variable], values, signed: bool = False):
        scope = tuple(scope)
        names = [v.name for v in scope]
        if len(set(names)) != len(names):
            raise ScopeError(f"duplicate variable in scope: {names}")
        shape = tuple(v.cardinality for v in scope)
        arr = np.asarray(values, dtype=float)
        expected = int(np.prod(shape)) if scope else 1
        if arr.size != expected:
            raise FactorError(f"factor over {names} needs {expected} values, got {arr.size}")
        # ascontiguousarray promotes 0-d to 1-d, so reshape afterwards.
        arr = np.ascontiguousarray(arr).reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise FactorError("factor entries must be finite")
        if not signed and np.any(arr < 0):
            raise FactorError("factor entries must be nonnegative")
        arr.setflags(write=False)
        self.scope = scope
        self.values = arr
        self.signed = signed

    @staticmethod
    def unit() -> "Factor":
        """The empty-scope factor with value 1 (multiplication identity)."""
        return Factor((), np.asarray(1.0))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def variable(self, name: str) -> Variable:
        for v in self.scope:
            if v.name == name:
                return v
        raise ScopeError(f"variable {name!r} not in scope {[v.name for v in self.scope]}")

    def axis_of(self, name: str) -> int:
        for i, v in enumerate(self.scope):
            if v.name == name:
                return i
        raise ScopeError(f"variable {name!r} not in scope {[v.name for v in self.scope]}")

    def reorder(self, scope: Sequence[Variable]) -> "Factor":
        """Same table with axes permuted into the given scope order."""
        scope = tuple(scope)
        if set(v.name for v in scope) != set(v.name for v in self.scope):
            raise ScopeError("reorder requires the same variable set")
        perm = [self.axis_of(v.name) for v in scope]
        return Factor(scope, np.transpose(self.values, perm), signed=self.signed)

    def __repr__(self):
        return f"Factor({[v.name for v in self.scope]}, sum={float(self.values.sum()):.6g})"


def factor_multiply(f: Factor, g: Factor) -> Factor:
    """Pointwise product; result scope is f's order followed by g's new variables."""
    _check_scope_consistency(f.scope, g.scope)
    f_names = {v.name for v in f.scope}
    new_scope = f.scope + tuple(v for v in g.scope if v.name not in f_names)
    n = len(new_scope)
    pos = {v.name: i for i, v in enumerate(new_scope)}

    def expand(factor: Factor) -> np.ndarray:
        # Broadcast the table into the result frame: own axes in result order,
        # size-1 axes elsewhere.
        order = sorted(range(len(factor.scope)), key=lambda i: pos[factor.scope[i].name])
        arr = np.transpose(factor.values, order)
        shape = [1] * n
        for i in order:
            shape[pos[factor.scope[i].name]] = factor.scope[i].cardinality
        return arr.reshape(shape)

    return Factor(new_scope, expand(f) * expand(g), signed=f.signed or g.signed)


def factor_marginalize(f: Factor, out: Iterable[Variable | str]) -> Factor:
    """Sum out the given variables; eliminating nothing returns f unchanged."""
    names = {v if isinstance(v, str) else v.name for v in out}
    if not names:
        return f
    axes = tuple(f.axis_of(name) for name in names)
    keep = tuple(v for v in f.scope if v.name not in names)
    return Factor(keep, f.values.sum(axis=axes), signed=f.signed)


@dataclass(frozen=True)
class Evidence:
    """A finding on one variable: hard (a state) or a likelihood weight vector.

    Hard evidence is stored as its indicator likelihood; ``state_index`` is
    kept so reports can echo the observed state.
    """

    variable: Variable
    weights: tuple[float, ...]
    state_index: int | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size != self.variable.cardinality:
            raise EvidenceError(
                f"likelihood for {self.variable.name!r} needs "
                f"{self.variable.cardinality} weights, got {w.size}"
            )
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise EvidenceError("likelihood weights must be finite and >= 0")
        if not np.any(w > 0):
            raise EvidenceError("likelihood weights must not all be zero")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    @property
    def kind(self) -> str:
        return "hard" if self.state_index is not None else "likelihood"

    @staticmethod
    def hard(variable: Variable, state: int | str) -> "Evidence":
        idx = variable.index_of(state) if isinstance(state, str) else int(state)
        if not 0 <= idx < variable.cardinality:
            raise EvidenceError(
                f"state index {idx} out of range for {variable.name!r} "
                f"({variable.cardinality} states)"
            )
        w = [0.0] * variable.cardinality
        w[idx] = 1.0
        return Evidence(variable, tuple(w), state_index=idx)

    @staticmethod
    def likelihood(variable: Variable, weights: Sequence[float]) -> "Evidence":
        return Evidence(variable, tuple(float(x) for x in weights))

    def as_factor(self) -> Factor:
        return Factor((self.variable,), np.asarray(self.weights))


def factor_reduce(f: Factor, e: Evidence) -> Factor:
    """Multiply the evidence weights into f along the evidence variable's axis.

    Scope is retained; hard evidence zeroes the inconsistent slices.
    """
    axis = f.axis_of(e.variable.name)
    if f.scope[axis].states != e.variable.states:
        raise StateMismatchError(
            f"evidence on {e.variable.name!r} does not match the factor's state list"
        )
    shape = [1] * len(f.scope)
    shape[axis] = e.variable.cardinality
    return Factor(f.scope, f.values * np.asarray(e.weights).reshape(shape))


def factor_normalize(f: Factor) -> tuple[Factor, float]:
    """Scale entries to sum 1; returns the original sum as the norm constant."""
    total = float(f.values.sum())
    if total <= 0.0:
        raise ImpossibleEvidenceError("cannot normalize an all-zero factor")
    return Factor(f.scope, f.values / total), total


@dataclass(frozen=True)
class Cpt:
    """Conditional probability table: factor over parents ++ [child] whose
    child slices each sum to 1."""

    child: Variable
    parents: tuple[Variable, ...]
    factor: Factor = field(compare=False)

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        expected = self.parents + (self.child,)
        if self.factor.scope != expected:
            raise FactorError(
                f"CPT for {self.child.name!r} must have scope parents ++ [child]; "
                f"got {[v.name for v in self.factor.scope]}"
            )
        sums = self.factor.values.sum(axis=-1)
        if not np.allclose(sums, 1.0, rtol=0.0, atol=ROW_SUM_TOL):
            worst = float(np.abs(sums - 1.0).max())
            raise FactorError(
                f"CPT rows for {self.child.name!r} must sum to 1 "
                f"(worst deviation {worst:.3g})"
            )

    @property
    def n_rows(self) -> int:
        return int(np.prod([p.cardinality for p in self.parents])) if self.parents else 1

    def row(self, parent_states: Sequence[int]) -> np.ndarray:
        idx = tuple(int(i) for i in parent_states)
        return np.asarray(self.factor.values[idx])


def cpt_from_rows(child: Variable, parents: Sequence[Variable], rows) -> Cpt:
    """Build a CPT from a (n_rows, cardinality) row block in parent-major order."""
    parents = tuple(parents)
    arr = np.asarray(rows, dtype=float)
    shape = tuple(p.cardinality for p in parents) + (child.cardinality,)
    return Cpt(child, parents, Factor(parents + (child,), arr.reshape(shape)))


def log_sum(values: np.ndarray) -> float:
    total = float(np.sum(values))
    if total <= 0.0:
        raise ImpossibleEvidenceError("probability of evidence is zero")
    return math.log(total)
