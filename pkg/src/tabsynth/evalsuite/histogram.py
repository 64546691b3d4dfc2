"""Equal-width 2-D joint histograms exported as CSV grids."""

from __future__ import annotations

import numpy as np

from ..errors import NonNumericFeatureError
from ..tables import FeatureKind, Table


def export_joint_histogram(
    table: Table,
    feature_x: str,
    feature_y: str,
    bins: int = 20,
    path=None,
    value_range=None,
):
    """Returns (counts [bins, bins], x_edges, y_edges); counts[i, j] covers
    the i-th x bin and j-th y bin.

    ``value_range`` = ((x_lo, x_hi), (y_lo, y_hi)) pins the grid, so real and
    synthetic tables can share one frame (union range); defaults to the
    table's own extent.
    """
    for name in (feature_x, feature_y):
        if table.schema.kind_of(name) is not FeatureKind.NUMERIC:
            raise NonNumericFeatureError(
                f"joint histogram needs numeric features; {name!r} is not"
            )
    x = table.numeric_column(feature_x)
    y = table.numeric_column(feature_y)
    if np.isnan(x).any() or np.isnan(y).any():
        raise NonNumericFeatureError("joint histogram needs complete columns")
    counts, x_edges, y_edges = np.histogram2d(x, y, bins=bins, range=value_range)
    counts = counts.astype(np.int64)

    if path is not None:
        lines = [
            "# x_edges," + ",".join(f"{v:.10g}" for v in x_edges),
            "# y_edges," + ",".join(f"{v:.10g}" for v in y_edges),
        ]
        for row in counts:
            lines.append(",".join(str(int(c)) for c in row))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return counts, x_edges, y_edges


def union_range(tables, feature_x: str, feature_y: str):
    """Shared ((x_lo, x_hi), (y_lo, y_hi)) frame across tables."""
    xs = np.concatenate([t.numeric_column(feature_x) for t in tables])
    ys = np.concatenate([t.numeric_column(feature_y) for t in tables])
    return ((float(xs.min()), float(xs.max())), (float(ys.min()), float(ys.max())))
