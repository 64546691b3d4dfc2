"""Likelihood fitness for all-numeric tables.

l_syn: mean log-density of the synthetic rows under a Gaussian mixture fit to
the real training rows. l_test: mean log-density of the real test rows under a
mixture fit to the synthetic rows. Both fits use EM with full covariance and
a 1e-6 variance floor, seeded identically so identical inputs give identical
numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NonNumericSchemaError
from ..gmm import fit_gmm, gmm_score
from ..tables import FeatureKind, Table
from .featurize import ensure_same_features


@dataclass(frozen=True)
class LikelihoodResult:
    l_syn: float
    l_test: float

    def to_json(self) -> dict:
        return {"l_syn": self.l_syn, "l_test": self.l_test}


def _matrix(table: Table) -> np.ndarray:
    cols = [table.numeric_column(f.name) for f in table.schema.features]
    x = np.stack(cols, axis=1)
    if np.isnan(x).any():
        raise NonNumericSchemaError("likelihood fitness needs complete rows")
    return x


def likelihood_fitness(
    real_train: Table,
    real_test: Table,
    synthetic: Table,
    n_components: int = 2,
    *,
    seed: int = 0,
    var_floor: float = 1e-6,
) -> LikelihoodResult:
    ensure_same_features(real_train, real_test, synthetic)
    for f in real_train.schema.features:
        if f.kind is not FeatureKind.NUMERIC:
            raise NonNumericSchemaError(
                f"likelihood fitness is numeric-only; {f.name!r} is categorical"
            )
    x_train = _matrix(real_train)
    x_test = _matrix(real_test)
    x_syn = _matrix(synthetic)

    fit_train = fit_gmm(x_train, n_components, seed, var_floor=var_floor)
    fit_syn = fit_gmm(x_syn, n_components, seed, var_floor=var_floor)
    return LikelihoodResult(
        l_syn=float(gmm_score(fit_train, x_syn).mean()),
        l_test=float(gmm_score(fit_syn, x_test).mean()),
    )
