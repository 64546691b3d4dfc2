"""Distance to closest record: per synthetic row, the minimum mixed L1
distance to any training row (absolute difference for numerics, 0/1 equality
for categoricals)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EvalError, TooFewRowsError
from ..tables import FeatureKind, Table
from .featurize import ensure_same_features


@dataclass(frozen=True)
class DcrResult:
    distances: np.ndarray

    @property
    def min(self) -> float:
        return float(self.distances.min())

    @property
    def median(self) -> float:
        return float(np.median(self.distances))

    @property
    def mean(self) -> float:
        return float(self.distances.mean())

    @property
    def zero_fraction(self) -> float:
        return float(np.mean(self.distances == 0.0))

    def to_json(self) -> dict:
        return {
            "count": int(self.distances.size),
            "min": self.min,
            "median": self.median,
            "mean": self.mean,
            "zero_fraction": self.zero_fraction,
        }


def _columns(table: Table):
    numeric, categorical = [], []
    for f in table.schema.features:
        if f.kind is FeatureKind.NUMERIC:
            col = table.numeric_column(f.name)
            if np.isnan(col).any():
                raise EvalError(
                    f"numeric column {f.name!r} has missing cells"
                )
            numeric.append(col)
        else:
            categorical.append(np.asarray(table.column(f.name), dtype=object))
    return numeric, categorical


def dcr(
    synthetic: Table,
    train: Table,
    *,
    normalized: bool = False,
    chunk: int = 256,
) -> DcrResult:
    """Distances are raw-scale by default; ``normalized`` min-max scales each
    numeric feature over the union of both tables first."""
    ensure_same_features(synthetic, train)
    if not synthetic.rows or not train.rows:
        raise TooFewRowsError("dcr needs at least one row on each side")
    syn_num, syn_cat = _columns(synthetic)
    tr_num, tr_cat = _columns(train)
    scales = []
    for s, t in zip(syn_num, tr_num):
        if normalized:
            lo = min(s.min(), t.min())
            hi = max(s.max(), t.max())
            scales.append(hi - lo if hi > lo else 1.0)
        else:
            scales.append(1.0)

    n = len(synthetic)
    out = np.empty(n, dtype=np.float64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        acc = np.zeros((stop - start, len(train)))
        for s, t, scale in zip(syn_num, tr_num, scales):
            acc += np.abs(s[start:stop, None] - t[None, :]) / scale
        for s, t in zip(syn_cat, tr_cat):
            acc += (s[start:stop, None] != t[None, :]).astype(np.float64)
        out[start:stop] = acc.min(axis=1)
    return DcrResult(distances=out)
