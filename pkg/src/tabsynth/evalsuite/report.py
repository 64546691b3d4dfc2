"""Bundle runner producing the full evaluation report.

Metric selection defaults to whatever the inputs support: dcr always, the
discriminator when both sides have enough rows, mle when a target feature is
known, likelihood when the schema is all numeric. Explicitly requesting an
unsupported metric is an error rather than a silent skip.

Discriminator protocol: the synthetic table is split 80/20 into its own
train/test shares (seeded, deterministic), and both test shares are trimmed
to equal size as the metric requires.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from ..errors import EvalError
from ..seeding import rng as derive_rng
from ..tables import FeatureKind, Table
from .dcr import DcrResult, dcr
from .discriminator import DiscriminatorResult, discriminator
from .likelihood import LikelihoodResult, likelihood_fitness
from .mle import MleResult, mle

ALL_METRICS = ("mle", "dcr", "discriminator", "likelihood")


@dataclass(frozen=True)
class EvalReport:
    mle_synth: MleResult | None
    mle_real: MleResult | None
    dcr: DcrResult | None
    discriminator: DiscriminatorResult | None
    likelihood: LikelihoodResult | None
    meta: dict

    def to_json(self) -> dict:
        return {
            "mle": (
                None
                if self.mle_synth is None
                else {
                    "synthetic": self.mle_synth.to_json(),
                    "real_baseline": self.mle_real.to_json(),
                }
            ),
            "dcr": None if self.dcr is None else self.dcr.to_json(),
            "discriminator": (
                None
                if self.discriminator is None
                else self.discriminator.to_json()
            ),
            "likelihood": (
                None if self.likelihood is None else self.likelihood.to_json()
            ),
            "meta": self.meta,
        }


def _split_synth(synthetic: Table, seed: int) -> tuple[Table, Table]:
    n = len(synthetic)
    order = derive_rng(seed, "disc-synth-split").permutation(n)
    n_test = max(1, round(0.2 * n))
    test_idx = set(int(i) for i in order[:n_test])
    train_rows = tuple(r for i, r in enumerate(synthetic.rows) if i not in test_idx)
    test_rows = tuple(synthetic.rows[int(i)] for i in order[:n_test])
    return synthetic.with_rows(train_rows), synthetic.with_rows(test_rows)


def run_eval(
    real_train: Table,
    real_test: Table,
    synthetic: Table,
    *,
    target: str | None = None,
    metrics: tuple[str, ...] | None = None,
    seeds=(0, 1, 2, 3, 4),
    gmm_components: int = 2,
    normalized_dcr: bool = False,
) -> EvalReport:
    all_numeric = all(
        f.kind is FeatureKind.NUMERIC for f in real_train.schema.features
    )
    if target is None:
        target = real_train.target_feature
    if metrics is None:
        selected = ["dcr", "discriminator"]
        if target is not None:
            selected.insert(0, "mle")
        if all_numeric:
            selected.append("likelihood")
    else:
        unknown = set(metrics) - set(ALL_METRICS)
        if unknown:
            raise EvalError(f"unknown metrics: {sorted(unknown)}")
        if "mle" in metrics and target is None:
            raise EvalError("mle requested but no target feature is known")
        if "likelihood" in metrics and not all_numeric:
            raise EvalError("likelihood requested on a non-numeric schema")
        selected = list(metrics)

    mle_synth = mle_real = None
    if "mle" in selected:
        mle_synth, mle_real = mle(
            real_train, synthetic, real_test, target, seeds=seeds
        )

    dcr_result = None
    if "dcr" in selected:
        dcr_result = dcr(synthetic, real_train, normalized=normalized_dcr)

    disc_result = None
    if "discriminator" in selected:
        synth_train, synth_test = _split_synth(synthetic, seeds[0])
        k = min(len(real_test), len(synth_test))
        disc_result = discriminator(
            real_train,
            synth_train,
            real_test.with_rows(real_test.rows[:k]),
            synth_test.with_rows(synth_test.rows[:k]),
            seeds=seeds,
        )

    lik_result = None
    if "likelihood" in selected:
        lik_result = likelihood_fitness(
            real_train, real_test, synthetic, gmm_components
        )

    config = {
        "metrics": selected,
        "seeds": list(seeds),
        "target": target,
        "gmm_components": gmm_components,
        "normalized_dcr": normalized_dcr,
    }
    blob = json.dumps(config, sort_keys=True).encode()
    meta = {
        "seeds": list(seeds),
        "config": config,
        "config_hash": hashlib.sha256(blob).hexdigest()[:12],
    }
    return EvalReport(
        mle_synth=mle_synth,
        mle_real=mle_real,
        dcr=dcr_result,
        discriminator=disc_result,
        likelihood=lik_result,
        meta=meta,
    )
