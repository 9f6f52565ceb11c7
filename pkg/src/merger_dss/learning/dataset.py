"""Categorical case data with missing values.

File format: delimiter-separated text (comma, tab or semicolon), one header
row of variable names, cells are state labels, "?" marks a missing value.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import DatasetError, SchemaMismatchError
from ..factors import Variable
from ..network import CHANCE, NetworkDoc

MISSING = -1


@dataclass(frozen=True)
class CaseDataset:
    schema: tuple[Variable, ...]
    rows: np.ndarray  # (n, len(schema)) int16, MISSING marks a hole

    def __post_init__(self):
        object.__setattr__(self, "schema", tuple(self.schema))
        rows = np.asarray(self.rows, dtype=np.int16)
        if rows.ndim != 2 or rows.shape[1] != len(self.schema):
            raise DatasetError(
                f"rows must be (n, {len(self.schema)}); got shape {rows.shape}"
            )
        for j, var in enumerate(self.schema):
            col = rows[:, j]
            bad = (col != MISSING) & ((col < 0) | (col >= var.cardinality))
            if np.any(bad):
                raise DatasetError(f"column {var.name!r} has out-of-range state indices")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])

    def column_index(self, name: str) -> int:
        for j, var in enumerate(self.schema):
            if var.name == name:
                return j
        raise DatasetError(f"no column named {name!r}")

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.column_index(name)]

    def check_matches(self, doc: NetworkDoc) -> None:
        """Schema must cover the network's chance variables by name and states."""
        by_name = {v.name: v for v in self.schema}
        for n in doc.nodes:
            if n.kind != CHANCE:
                continue
            var = by_name.get(n.name)
            if var is None:
                raise SchemaMismatchError(f"dataset has no column for node {n.name!r}")
            if var.states != n.states:
                raise SchemaMismatchError(
                    f"column {n.name!r} states {list(var.states)} do not match the "
                    f"network's {list(n.states or ())}"
                )


def _sniff_delimiter(header: str) -> str:
    for cand in ("\t", ";", ","):
        if cand in header:
            return cand
    return ","


def parse_cases(text: str, schema: Sequence[Variable] | None = None) -> CaseDataset:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DatasetError("empty case file")
    delim = _sniff_delimiter(lines[0])
    names = [c.strip() for c in lines[0].split(delim)]
    if schema is not None:
        by_name = {v.name: v for v in schema}
        missing = [n for n in names if n not in by_name]
        if missing:
            raise SchemaMismatchError(f"unknown columns in case file: {missing}")
        vars_ = [by_name[n] for n in names]
        rows = np.full((len(lines) - 1, len(names)), MISSING, dtype=np.int16)
        for i, ln in enumerate(lines[1:]):
            cells = [c.strip() for c in ln.split(delim)]
            if len(cells) != len(names):
                raise DatasetError(f"row {i + 2} has {len(cells)} cells, expected {len(names)}")
            for j, cell in enumerate(cells):
                if cell != "?":
                    rows[i, j] = vars_[j].index_of(cell)
        return CaseDataset(tuple(vars_), rows)
    # No schema given: infer state lists from the observed labels, sorted.
    raw = []
    for i, ln in enumerate(lines[1:]):
        cells = [c.strip() for c in ln.split(delim)]
        if len(cells) != len(names):
            raise DatasetError(f"row {i + 2} has {len(cells)} cells, expected {len(names)}")
        raw.append(cells)
    vars_ = []
    for j, name in enumerate(names):
        labels = sorted({r[j] for r in raw if r[j] != "?"})
        if len(labels) < 2:
            raise DatasetError(f"column {name!r} has fewer than 2 observed states")
        vars_.append(Variable(name, tuple(labels)))
    rows = np.full((len(raw), len(names)), MISSING, dtype=np.int16)
    for i, r in enumerate(raw):
        for j, cell in enumerate(r):
            if cell != "?":
                rows[i, j] = vars_[j].index_of(cell)
    return CaseDataset(tuple(vars_), rows)


def read_cases(path: str | Path, schema: Sequence[Variable] | None = None) -> CaseDataset:
    return parse_cases(Path(path).read_text(encoding="utf-8"), schema)


def render_cases(data: CaseDataset, delimiter: str = ",") -> str:
    buf = io.StringIO()
    buf.write(delimiter.join(v.name for v in data.schema) + "\n")
    for row in data.rows:
        cells = [
            "?" if int(x) == MISSING else data.schema[j].states[int(x)]
            for j, x in enumerate(row)
        ]
        buf.write(delimiter.join(cells) + "\n")
    return buf.getvalue()


def write_cases(data: CaseDataset, path: str | Path, delimiter: str = ",") -> None:
    Path(path).write_text(render_cases(data, delimiter), encoding="utf-8")


def mask_mcar(data: CaseDataset, fraction: float, seed: int) -> CaseDataset:
    """Hide a fraction of cells completely at random (test helper)."""
    rng = np.random.default_rng(seed)
    rows = np.array(data.rows, dtype=np.int16)
    mask = rng.random(rows.shape) < fraction
    rows[mask] = MISSING
    return CaseDataset(data.schema, rows)
