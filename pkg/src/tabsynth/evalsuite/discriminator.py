"""Random-forest discriminator between generated and original rows.

Generated rows are labeled 0, original rows 1. Per seed, the forest's depth
and tree count are grid-searched by 5-fold cross-validation on the training
union, then the winner is refit and scored on the balanced test union. An
accuracy near 0.5 means the sides are indistinguishable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EvalError, TooFewRowsError
from ..seeding import derive_key, rng as derive_rng
from ..tables import Table
from .featurize import Featurizer, ensure_same_features
from .models import RandomForest

GRID = [(6, 50), (6, 100), (12, 50), (12, 100), (20, 50), (20, 100)]


@dataclass(frozen=True)
class DiscriminatorResult:
    accuracy_mean: float
    accuracy_std: float
    per_seed: tuple[float, ...]
    chosen: tuple[tuple[int, int], ...]

    def to_json(self) -> dict:
        return {
            "accuracy_mean": self.accuracy_mean,
            "accuracy_std": self.accuracy_std,
            "per_seed": list(self.per_seed),
            "chosen_depth_trees": [list(c) for c in self.chosen],
        }


def _cv_accuracy(x, y, depth, trees, folds, seed_key) -> float:
    accs = []
    for fi, val_idx in enumerate(folds):
        mask = np.ones(len(y), dtype=bool)
        mask[val_idx] = False
        forest = RandomForest(
            task="classify",
            n_trees=trees,
            max_depth=depth,
            n_classes=2,
            seed=derive_key(seed_key, "disc-cv-fit", fi),
        )
        forest.fit(x[mask], y[mask])
        accs.append(float(np.mean(forest.predict(x[val_idx]) == y[val_idx])))
    return float(np.mean(accs))


def discriminator(
    real_train: Table,
    synth_train: Table,
    real_test: Table,
    synth_test: Table,
    seeds=(0, 1, 2, 3, 4),
) -> DiscriminatorResult:
    ensure_same_features(real_train, synth_train, real_test, synth_test)
    if len(real_train) < 20 or len(synth_train) < 20:
        raise TooFewRowsError(
            f"discriminator needs >= 20 training rows per side, got "
            f"{len(real_train)} real / {len(synth_train)} synthetic"
        )
    if len(real_test) != len(synth_test):
        raise EvalError(
            f"test shares must be equal-sized, got {len(real_test)} real / "
            f"{len(synth_test)} synthetic"
        )
    if len(real_test) == 0:
        raise TooFewRowsError("discriminator needs a non-empty test share")

    feat = Featurizer.fit([real_train, synth_train, real_test, synth_test])
    x_train = np.concatenate(
        [feat.transform(synth_train), feat.transform(real_train)]
    )
    y_train = np.concatenate(
        [np.zeros(len(synth_train), dtype=np.int64),
         np.ones(len(real_train), dtype=np.int64)]
    )
    x_test = np.concatenate(
        [feat.transform(synth_test), feat.transform(real_test)]
    )
    y_test = np.concatenate(
        [np.zeros(len(synth_test), dtype=np.int64),
         np.ones(len(real_test), dtype=np.int64)]
    )

    per_seed, chosen = [], []
    for seed in seeds:
        order = derive_rng(seed, "disc-cv-folds").permutation(len(y_train))
        folds = np.array_split(order, 5)
        best = None
        for depth, trees in GRID:
            acc = _cv_accuracy(x_train, y_train, depth, trees, folds, seed)
            if best is None or acc > best[0] + 1e-12:
                best = (acc, depth, trees)
        _, depth, trees = best
        forest = RandomForest(
            task="classify",
            n_trees=trees,
            max_depth=depth,
            n_classes=2,
            seed=derive_key(seed, "disc-final-fit"),
        )
        forest.fit(x_train, y_train)
        per_seed.append(float(np.mean(forest.predict(x_test) == y_test)))
        chosen.append((depth, trees))

    values = np.asarray(per_seed)
    return DiscriminatorResult(
        accuracy_mean=float(values.mean()),
        accuracy_std=float(values.std()),
        per_seed=tuple(per_seed),
        chosen=tuple(chosen),
    )
