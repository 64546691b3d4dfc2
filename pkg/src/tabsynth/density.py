"""Per-feature marginal densities used to draw prompt values.

Categorical features get exact empirical frequencies; numeric features get
a small 1-D Gaussian mixture. Drawn numeric values are formatted with the
same number of decimal places as the source column so prompts look like
training text.
"""

from dataclasses import dataclass

import numpy as np

from .errors import TooFewRowsError
from .gmm import GmmFit, fit_gmm
from .seeding import derive_key
from .tables import MISSING, FeatureKind, Table

_MAX_DECIMALS = 6


@dataclass(frozen=True)
class CategoricalDensity:
    values: tuple[str, ...]
    probs: tuple[float, ...]

    def draw(self, rng: np.random.Generator) -> str:
        return self.values[rng.choice(len(self.values), p=np.asarray(self.probs))]


@dataclass(frozen=True)
class NumericDensity:
    weights: tuple[float, ...]
    means: tuple[float, ...]
    variances: tuple[float, ...]
    decimals: int

    def draw(self, rng: np.random.Generator) -> str:
        j = rng.choice(len(self.weights), p=np.asarray(self.weights))
        value = rng.normal(self.means[j], np.sqrt(self.variances[j]))
        return f"{value:.{self.decimals}f}"


@dataclass(frozen=True)
class FeatureDensity:
    entries: dict[str, CategoricalDensity | NumericDensity]

    def to_json(self) -> dict:
        out = {}
        for name, entry in self.entries.items():
            if isinstance(entry, CategoricalDensity):
                out[name] = {
                    "kind": "categorical",
                    "values": list(entry.values),
                    "probs": list(entry.probs),
                }
            else:
                out[name] = {
                    "kind": "numeric",
                    "weights": list(entry.weights),
                    "means": list(entry.means),
                    "variances": list(entry.variances),
                    "decimals": entry.decimals,
                }
        return out

    @classmethod
    def from_json(cls, data: dict) -> "FeatureDensity":
        entries: dict[str, CategoricalDensity | NumericDensity] = {}
        for name, blob in data.items():
            if blob["kind"] == "categorical":
                entries[name] = CategoricalDensity(
                    values=tuple(blob["values"]), probs=tuple(blob["probs"])
                )
            else:
                entries[name] = NumericDensity(
                    weights=tuple(blob["weights"]),
                    means=tuple(blob["means"]),
                    variances=tuple(blob["variances"]),
                    decimals=int(blob["decimals"]),
                )
        return cls(entries=entries)


def _observed_decimals(cells: list[str]) -> int:
    dec = 0
    for cell in cells:
        low = cell.lower()
        if "e" in low:
            return _MAX_DECIMALS
        if "." in cell:
            dec = max(dec, len(cell.split(".", 1)[1]))
    return min(dec, _MAX_DECIMALS)


def fit_feature_density(
    table: Table, feature: str, n_components: int = 5, seed: int = 0
) -> CategoricalDensity | NumericDensity:
    """Estimate one feature's marginal from the observed (non-missing) cells."""
    schema = table.schema
    idx = schema.index_of(feature)
    cells = [row[idx] for row in table.rows if row[idx] != MISSING]
    if not cells:
        raise TooFewRowsError(f"feature {feature!r} has no observed values")

    if schema.features[idx].kind is FeatureKind.CATEGORICAL:
        values = sorted(set(cells))
        counts = {v: 0 for v in values}
        for c in cells:
            counts[c] += 1
        n = len(cells)
        return CategoricalDensity(
            values=tuple(values), probs=tuple(counts[v] / n for v in values)
        )

    x = np.array([float(c) for c in cells])
    decimals = _observed_decimals(cells)
    span = float(x.max() - x.min())
    floor = max(1e-9 * span * span, 1e-12)
    distinct = np.unique(x)
    if len(distinct) == 1:
        return NumericDensity(
            weights=(1.0,), means=(float(distinct[0]),), variances=(floor,), decimals=decimals
        )
    k = min(n_components, len(distinct))
    fit: GmmFit = fit_gmm(
        x[:, None], k, derive_key(seed, f"density:{feature}") % (1 << 32), var_floor=floor
    )
    return NumericDensity(
        weights=tuple(float(w) for w in fit.weights),
        means=tuple(float(m[0]) for m in fit.means),
        variances=tuple(float(c[0, 0]) for c in fit.covariances),
        decimals=decimals,
    )


def fit_table_density(table: Table, n_components: int = 5, seed: int = 0) -> FeatureDensity:
    return FeatureDensity(
        entries={
            f.name: fit_feature_density(table, f.name, n_components, seed)
            for f in table.schema.features
        }
    )
