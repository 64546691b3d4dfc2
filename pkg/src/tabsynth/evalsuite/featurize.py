"""Numeric encoding of tables for the built-in evaluator models.

Categoricals are one-hot over the union of values observed across the fitted
tables; numerics pass through as parsed floats (the tree models are
scale-free, and the gradient-descent models z-scale internally). A value
unseen at fit time encodes as an all-zero block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EvalError, SchemaMismatchError
from ..tables import MISSING, FeatureKind, Table


def ensure_same_features(*tables: Table) -> None:
    """Schemas must agree on feature names, order, and kinds."""
    first = [(f.name, f.kind) for f in tables[0].schema.features]
    for t in tables[1:]:
        if [(f.name, f.kind) for f in t.schema.features] != first:
            raise SchemaMismatchError(
                f"feature lists differ: {first} vs "
                f"{[(f.name, f.kind) for f in t.schema.features]}"
            )


@dataclass(frozen=True)
class Featurizer:
    names: tuple[str, ...]
    kinds: tuple[FeatureKind, ...]
    categories: dict[str, tuple[str, ...]]

    @classmethod
    def fit(cls, tables: list[Table], exclude: tuple[str, ...] = ()) -> "Featurizer":
        ensure_same_features(*tables)
        schema = tables[0].schema
        names, kinds = [], []
        categories: dict[str, tuple[str, ...]] = {}
        for f in schema.features:
            if f.name in exclude:
                continue
            names.append(f.name)
            kinds.append(f.kind)
            if f.kind is FeatureKind.CATEGORICAL:
                seen: set[str] = set()
                for t in tables:
                    seen.update(c for c in t.column(f.name) if c != MISSING)
                categories[f.name] = tuple(sorted(seen))
        return cls(tuple(names), tuple(kinds), categories)

    @property
    def dim(self) -> int:
        total = 0
        for name, kind in zip(self.names, self.kinds):
            total += len(self.categories[name]) if kind is FeatureKind.CATEGORICAL else 1
        return total

    def transform(self, table: Table) -> np.ndarray:
        blocks = []
        for name, kind in zip(self.names, self.kinds):
            if kind is FeatureKind.NUMERIC:
                col = table.numeric_column(name)
                if np.isnan(col).any():
                    raise EvalError(
                        f"numeric column {name!r} has missing cells; "
                        "evaluation needs complete tables"
                    )
                blocks.append(col[:, None])
            else:
                values = self.categories[name]
                index = {v: i for i, v in enumerate(values)}
                hot = np.zeros((len(table), len(values)))
                for r, cell in enumerate(table.column(name)):
                    j = index.get(cell)
                    if j is not None:
                        hot[r, j] = 1.0
                blocks.append(hot)
        if not blocks:
            return np.zeros((len(table), 0))
        return np.concatenate(blocks, axis=1)
