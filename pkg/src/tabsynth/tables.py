"""Typed in-memory representation of tabular data.

Cells are raw strings with a typed view on top: a feature is Numeric iff every
non-missing cell parses as a finite decimal, otherwise Categorical. Values are
never reformatted, so encode/decode stays lossless. Missing cells are empty
strings and are kept, not imputed.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    EmptyTableError,
    InvalidFractionError,
    RaggedRowsError,
    SchemaValidationError,
)

# Optional sign, digits with optional decimal point, optional exponent.
# Deliberately stricter than float(): no whitespace, underscores, inf or nan.
_DECIMAL_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")

# Substrings that would make the clause grammar ambiguous.
_FORBIDDEN = (", ", " is ")

MISSING = ""


def parse_decimal(text: str) -> float | None:
    """Parse a cell as a finite decimal number, or return None."""
    if not _DECIMAL_RE.match(text):
        return None
    value = float(text)
    return value if math.isfinite(value) else None


class FeatureKind(Enum):
    CATEGORICAL = "categorical"
    NUMERIC = "numeric"


@dataclass(frozen=True)
class Feature:
    name: str
    kind: FeatureKind


@dataclass(frozen=True)
class Schema:
    """Ordered feature list plus per-feature supports and ranges.

    ``categorical_support`` holds the distinct value strings seen at fit time
    for each categorical feature; ``numeric_range`` the observed (min, max)
    for each numeric feature.
    """

    features: tuple[Feature, ...]
    categorical_support: dict[str, frozenset[str]] = field(default_factory=dict)
    numeric_range: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaValidationError("feature names must be unique")
        for name in names:
            if not name:
                raise SchemaValidationError("feature names must be non-empty")
            for bad in _FORBIDDEN:
                if bad in name:
                    raise SchemaValidationError(
                        f"feature name {name!r} contains {bad!r}, which clashes "
                        "with the clause grammar"
                    )
        for name, (lo, hi) in self.numeric_range.items():
            if lo > hi:
                raise SchemaValidationError(f"numeric range of {name!r} has min > max")
        for name, support in self.categorical_support.items():
            if not support:
                raise SchemaValidationError(f"empty support for categorical {name!r}")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def index_of(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise SchemaValidationError(f"unknown feature {name!r}")

    def kind_of(self, name: str) -> FeatureKind:
        return self.features[self.index_of(name)].kind

    def __len__(self) -> int:
        return len(self.features)

    def to_json(self) -> dict:
        return {
            "features": [[f.name, f.kind.value] for f in self.features],
            "categorical_support": {
                k: sorted(v) for k, v in self.categorical_support.items()
            },
            "numeric_range": {k: list(v) for k, v in self.numeric_range.items()},
        }

    @classmethod
    def from_json(cls, data: dict) -> "Schema":
        return cls(
            features=tuple(
                Feature(name, FeatureKind(kind)) for name, kind in data["features"]
            ),
            categorical_support={
                k: frozenset(v) for k, v in data["categorical_support"].items()
            },
            numeric_range={
                k: (float(lo), float(hi))
                for k, (lo, hi) in data["numeric_range"].items()
            },
        )


# A row is a tuple of raw cell strings, one per schema feature. Missing cells
# are empty strings.
Row = tuple[str, ...]


@dataclass(frozen=True)
class Table:
    schema: Schema
    rows: tuple[Row, ...]
    target_feature: str | None = None

    def __post_init__(self):
        if self.target_feature is not None and self.target_feature not in self.schema.names:
            raise SchemaValidationError(
                f"target feature {self.target_feature!r} not in schema"
            )
        m = len(self.schema)
        for i, row in enumerate(self.rows):
            if len(row) != m:
                raise RaggedRowsError(i, m, len(row))

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[str]:
        j = self.schema.index_of(name)
        return [row[j] for row in self.rows]

    def numeric_column(self, name: str) -> np.ndarray:
        """Parsed values of a numeric column; missing cells become NaN."""
        if self.schema.kind_of(name) is not FeatureKind.NUMERIC:
            raise SchemaValidationError(f"{name!r} is not numeric")
        out = []
        for cell in self.column(name):
            out.append(np.nan if cell == MISSING else float(cell))
        return np.asarray(out, dtype=np.float64)

    def with_rows(self, rows) -> "Table":
        return replace(self, rows=tuple(rows))

    def has_missing(self) -> bool:
        return any(MISSING in row for row in self.rows)


def _validate_cells(rows: list[list[str]], header: list[str]) -> None:
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            for bad in _FORBIDDEN:
                if bad in cell:
                    raise SchemaValidationError(
                        f"cell {header[j]!r}={cell!r} in row {i} contains {bad!r}, "
                        "which clashes with the clause grammar"
                    )


def infer_schema(header: list[str], rows: list[list[str]]) -> Schema:
    """A column is Numeric iff every non-missing cell parses as a finite decimal."""
    features = []
    support: dict[str, frozenset[str]] = {}
    ranges: dict[str, tuple[float, float]] = {}
    for j, name in enumerate(header):
        cells = [row[j] for row in rows if row[j] != MISSING]
        if not cells:
            raise SchemaValidationError(
                f"column {name!r} has no non-missing cells; its kind cannot be inferred"
            )
        parsed = [parse_decimal(c) for c in cells]
        if all(v is not None for v in parsed):
            features.append(Feature(name, FeatureKind.NUMERIC))
            values = [v for v in parsed if v is not None]
            ranges[name] = (min(values), max(values))
        else:
            features.append(Feature(name, FeatureKind.CATEGORICAL))
            support[name] = frozenset(cells)
    return Schema(tuple(features), support, ranges)


def load_csv(
    path: str | Path,
    delimiter: str = ",",
    header: bool = True,
    target_feature: str | None = None,
) -> Table:
    """Load a UTF-8 CSV file into a Table with an inferred schema.

    Without a header row, columns are named col0..col{m-1}. Missing cells
    (empty strings) are retained. Raises RaggedRowsError, EmptyTableError or
    SchemaValidationError on malformed input; unreadable files raise OSError.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        records = list(reader)
    if header:
        if not records:
            raise EmptyTableError(f"{path}: no header row")
        names = records[0]
        data = records[1:]
    else:
        if not records:
            raise EmptyTableError(f"{path}: empty file")
        names = [f"col{j}" for j in range(len(records[0]))]
        data = records
    if not data:
        raise EmptyTableError(f"{path}: zero data rows")
    width = len(names)
    for i, row in enumerate(data):
        if len(row) != width:
            raise RaggedRowsError(i, width, len(row))
    _validate_cells(data, names)
    schema = infer_schema(names, data)
    return Table(schema, tuple(tuple(row) for row in data), target_feature)


def save_csv(table: Table, path: str | Path, delimiter: str = ",") -> None:
    """Write raw cells back out; reloading yields identical strings."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(table.schema.names)
        writer.writerows(table.rows)


def from_rows(
    header: list[str],
    rows: list[list[str]] | list[tuple[str, ...]],
    target_feature: str | None = None,
) -> Table:
    """Build a Table from in-memory cells, inferring the schema."""
    if not rows:
        raise EmptyTableError("zero data rows")
    width = len(header)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise RaggedRowsError(i, width, len(row))
    data = [list(r) for r in rows]
    _validate_cells(data, header)
    schema = infer_schema(header, data)
    return Table(schema, tuple(tuple(r) for r in data), target_feature)


def fit_schema_stats(table: Table) -> Schema:
    """Recompute exact supports and ranges from the table's rows."""
    if not table.rows:
        raise EmptyTableError("cannot fit stats on an empty table")
    support: dict[str, frozenset[str]] = {}
    ranges: dict[str, tuple[float, float]] = {}
    for f in table.schema.features:
        cells = [c for c in table.column(f.name) if c != MISSING]
        if f.kind is FeatureKind.CATEGORICAL:
            support[f.name] = frozenset(cells)
        else:
            values = [float(c) for c in cells]
            ranges[f.name] = (min(values), max(values))
    return Schema(table.schema.features, support, ranges)


def split(table: Table, test_fraction: float, seed: int) -> tuple[Table, Table]:
    """Deterministic disjoint train/test partition; train gets ceil((1-f)*n) rows."""
    if not 0.0 < test_fraction < 1.0:
        raise InvalidFractionError(f"test fraction {test_fraction} outside (0, 1)")
    n = len(table.rows)
    if n < 2:
        raise EmptyTableError("need at least 2 rows to split")
    order = np.random.default_rng(seed).permutation(n)
    n_train = math.ceil((1.0 - test_fraction) * n)
    train_idx = sorted(order[:n_train].tolist())
    test_idx = sorted(order[n_train:].tolist())
    return (
        table.with_rows(table.rows[i] for i in train_idx),
        table.with_rows(table.rows[i] for i in test_idx),
    )
