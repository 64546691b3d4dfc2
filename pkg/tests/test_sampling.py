"""Temperature sampling, preconditioned generation, and imputation."""

import dataclasses
import math

import numpy as np
import pytest
from scipy.stats import chisquare

from tabsynth.codec import Clause
from tabsynth.errors import (
    AttemptBudgetExhaustedError,
    ConstraintUnsatisfiableError,
    NonFiniteLogitsError,
    SamplingError,
)
from tabsynth.lm import Checkpoint, LmConfig, TrainConfig, init_params, train
from tabsynth.bpe import train_bpe
from tabsynth.codec import encode_table
from tabsynth.sampling import (
    Mode,
    SampleSpec,
    next_token,
    sample,
    sample_tokens,
    impute,
)
from tabsynth.tables import fit_schema_stats, from_rows


def softmax(z, t=1.0):
    z = np.asarray(z, dtype=np.float64) / t
    e = np.exp(z - z.max())
    return e / e.sum()


class TestNextToken:
    def test_two_logit_closed_form(self):
        rng = np.random.default_rng(0)
        draws = sample_tokens(np.array([1.0, 0.0]), 1.0, rng, 100_000)
        freq0 = np.mean(draws == 0)
        assert abs(freq0 - math.e / (math.e + 1)) < 0.01

    def test_uniform_logits_uniform_draws(self):
        rng = np.random.default_rng(1)
        draws = sample_tokens(np.zeros(4), 0.7, rng, 100_000)
        for t in range(4):
            assert abs(np.mean(draws == t) - 0.25) < 0.01

    def test_low_temperature_sharpens_to_argmax(self):
        rng = np.random.default_rng(2)
        draws = sample_tokens(np.array([5.0, 0.0, 0.0]), 0.01, rng, 20_000)
        assert np.mean(draws == 0) > 0.999

    def test_chi_square_against_closed_form(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(0, 1.5, 6)
        t = 0.7
        n = 100_000
        draws = sample_tokens(logits, t, np.random.default_rng(4), n)
        counts = np.bincount(draws, minlength=6)
        _, p = chisquare(counts, n * softmax(logits, t))
        assert p > 0.01

    def test_temperature_monotonicity_closed_form(self):
        from tabsynth.sampling import _temperature_probs

        logits = np.array([2.0, 1.0, 0.5, -1.0])
        probs = [_temperature_probs(logits, t)[0] for t in (2.0, 1.0, 0.5, 0.1)]
        assert all(b > a for a, b in zip(probs, probs[1:]))
        for t in (2.0, 1.0, 0.5, 0.1):
            assert np.allclose(
                _temperature_probs(logits, t), softmax(logits, t), atol=1e-12
            )

    def test_next_token_matches_vectorized_stream(self):
        logits = np.array([0.3, -0.2, 1.1])
        seq = [
            next_token(logits, 0.9, np.random.default_rng(7)) for _ in range(1)
        ]
        vec = sample_tokens(logits, 0.9, np.random.default_rng(7), 1)
        assert seq[0] == vec[0]

    def test_non_finite_logits_rejected(self):
        rng = np.random.default_rng(8)
        with pytest.raises(NonFiniteLogitsError):
            next_token(np.array([1.0, np.nan]), 1.0, rng)
        with pytest.raises(NonFiniteLogitsError):
            next_token(np.array([1.0, np.inf]), 1.0, rng)

    def test_bad_temperature_rejected(self):
        rng = np.random.default_rng(9)
        with pytest.raises(SamplingError):
            next_token(np.array([1.0, 0.0]), 0.0, rng)
        with pytest.raises(SamplingError):
            next_token(np.array([1.0, 0.0]), -2.0, rng)

    def test_ids_within_range(self):
        rng = np.random.default_rng(10)
        draws = sample_tokens(np.array([0.0, 5.0, -3.0]), 1.3, rng, 5000)
        assert draws.min() >= 0 and draws.max() <= 2


class TestSpecValidation:
    def test_count_must_be_positive(self):
        with pytest.raises(SamplingError):
            SampleSpec(count=0)

    def test_temperature_must_be_positive(self):
        with pytest.raises(SamplingError):
            SampleSpec(count=1, temperature=0.0)
        with pytest.raises(SamplingError):
            SampleSpec(count=1, temperature=float("nan"))

    def test_duplicate_constraints_rejected(self):
        with pytest.raises(SamplingError):
            SampleSpec(
                count=1,
                mode=Mode.MULTI_NAME_VALUE,
                constraints=(Clause("A", "x"), Clause("A", "y")),
            )

    def test_constraints_only_in_multi_mode(self):
        with pytest.raises(SamplingError):
            SampleSpec(count=1, constraints=(Clause("A", "x"),))

    def test_pinned_start_cannot_be_constrained(self):
        with pytest.raises(SamplingError):
            SampleSpec(
                count=1,
                mode=Mode.MULTI_NAME_VALUE,
                constraints=(Clause("A", "x"),),
                start_feature="A",
            )

    def test_factor_must_be_positive(self):
        with pytest.raises(SamplingError):
            SampleSpec(count=1, max_attempts_factor=0)

    def test_json_roundtrip(self):
        spec = SampleSpec(
            count=4,
            temperature=1.2,
            mode=Mode.MULTI_NAME_VALUE,
            constraints=(Clause("A", "x"),),
            seed=11,
        )
        assert SampleSpec.from_json(spec.to_json()) == spec


@pytest.fixture(scope="module")
def tiny_ckpt():
    """Three-record table, trained close to memorization."""
    table = from_rows(
        ["Occupation", "Age"],
        [("doctor", "34"), ("nurse", "46"), ("doctor", "18")],
    )
    ckpt = train(
        table,
        # Room beyond the longest record so a fully-constrained prompt can
        # still fit and leave space for the end token.
        LmConfig(
            vocab_size=258, context_len=48, n_layers=1, n_heads=2,
            d_model=32, d_ff=64, seed=1,
        ),
        TrainConfig(
            epochs=120, batch_size=3, learning_rate=3e-3,
            weight_decay=0.0, seed=2,
        ),
    )
    return table, ckpt


@pytest.fixture(scope="module")
def memo_ckpt():
    """Single-record table memorized by the model."""
    table = from_rows(["Job", "Age"], [("doctor", "34")])
    return table, train(
        table,
        LmConfig(
            vocab_size=258, context_len=32, n_layers=1, n_heads=2,
            d_model=32, d_ff=64, seed=3,
        ),
        TrainConfig(
            epochs=300, batch_size=1, learning_rate=3e-3,
            weight_decay=0.0, seed=4,
        ),
    )


class TestSample:
    def test_memorized_record_returned(self, memo_ckpt):
        table, ckpt = memo_ckpt
        report = sample(ckpt, SampleSpec(count=8, temperature=0.05, seed=0))
        assert report.rows.rows == (("doctor", "34"),) * 8
        assert report.invalid == 0
        assert report.invalid_rate == 0.0
        assert report.attempts == 8

    def test_multi_constraint_byte_fidelity(self, tiny_ckpt):
        _, ckpt = tiny_ckpt
        spec = SampleSpec(
            count=6,
            temperature=0.7,
            mode=Mode.MULTI_NAME_VALUE,
            constraints=(Clause("Occupation", "nurse"),),
            seed=5,
        )
        report = sample(ckpt, spec)
        assert all(row[0] == "nurse" for row in report.rows.rows)

    def test_multi_all_features_constrained(self, tiny_ckpt):
        _, ckpt = tiny_ckpt
        spec = SampleSpec(
            count=3,
            mode=Mode.MULTI_NAME_VALUE,
            constraints=(Clause("Occupation", "doctor"), Clause("Age", "34")),
            seed=6,
        )
        report = sample(ckpt, spec)
        assert report.rows.rows == (("doctor", "34"),) * 3

    def test_name_value_mode_draws_values(self, tiny_ckpt):
        table, ckpt = tiny_ckpt
        report = sample(
            ckpt, SampleSpec(count=6, temperature=0.5, mode=Mode.NAME_VALUE, seed=7)
        )
        support = table.schema.categorical_support["Occupation"]
        for occ, age in report.rows.rows:
            assert occ in support
            float(age)

    def test_rows_always_schema_valid(self, tiny_ckpt):
        table, ckpt = tiny_ckpt
        report = sample(ckpt, SampleSpec(count=10, temperature=1.0, seed=8))
        support = table.schema.categorical_support["Occupation"]
        assert len(report.rows) == 10
        for occ, age in report.rows.rows:
            assert occ in support
            float(age)

    def test_out_of_support_constraint_rejected(self, tiny_ckpt):
        _, ckpt = tiny_ckpt
        spec = SampleSpec(
            count=1,
            mode=Mode.MULTI_NAME_VALUE,
            constraints=(Clause("Occupation", "pilot"),),
        )
        with pytest.raises(ConstraintUnsatisfiableError):
            sample(ckpt, spec)

    def test_unparsable_numeric_constraint_rejected(self, tiny_ckpt):
        _, ckpt = tiny_ckpt
        spec = SampleSpec(
            count=1,
            mode=Mode.MULTI_NAME_VALUE,
            constraints=(Clause("Age", "very old"),),
        )
        with pytest.raises(ConstraintUnsatisfiableError):
            sample(ckpt, spec)

    def test_unknown_constraint_feature(self, tiny_ckpt):
        _, ckpt = tiny_ckpt
        spec = SampleSpec(
            count=1, mode=Mode.MULTI_NAME_VALUE, constraints=(Clause("Salary", "1"),)
        )
        with pytest.raises(SamplingError):
            sample(ckpt, spec)

    def test_unknown_start_feature(self, tiny_ckpt):
        _, ckpt = tiny_ckpt
        with pytest.raises(SamplingError):
            sample(ckpt, SampleSpec(count=1, start_feature="Salary"))

    def test_pinned_start_feature_runs(self, tiny_ckpt):
        _, ckpt = tiny_ckpt
        report = sample(
            ckpt, SampleSpec(count=3, temperature=0.5, start_feature="Age", seed=9)
        )
        assert len(report.rows) == 3

    def test_deterministic_and_chunk_invariant(self, tiny_ckpt):
        _, ckpt = tiny_ckpt
        spec = SampleSpec(count=5, temperature=0.8, seed=11)
        a = sample(ckpt, spec)
        b = sample(ckpt, spec, chunk_size=2)
        c = sample(ckpt, spec, chunk_size=3)
        assert a.rows.rows == b.rows.rows == c.rows.rows
        assert a.attempts == b.attempts == c.attempts

    def test_worker_count_invariant(self, tiny_ckpt):
        _, ckpt = tiny_ckpt
        spec = SampleSpec(count=5, temperature=0.8, seed=11)
        a = sample(ckpt, spec)
        b = sample(ckpt, spec, chunk_size=2, workers=3)
        assert a.rows.rows == b.rows.rows
        assert a.attempts == b.attempts

    def test_seed_changes_output(self, tiny_ckpt):
        _, ckpt = tiny_ckpt
        a = sample(ckpt, SampleSpec(count=10, temperature=1.0, seed=1))
        b = sample(ckpt, SampleSpec(count=10, temperature=1.0, seed=2))
        assert a.rows.rows != b.rows.rows

    def test_budget_exhaustion_reports_reasons(self):
        table = from_rows(
            ["Occupation", "Age"], [("doctor", "34"), ("nurse", "46")]
        )
        schema = fit_schema_stats(table)
        texts = [r.text for r in encode_table(table.rows, schema, None)]
        vocab = train_bpe(texts, 258)
        config = LmConfig(
            vocab_size=len(vocab), context_len=32, n_layers=1, n_heads=1,
            d_model=16, d_ff=32, seed=0,
        )
        untrained = Checkpoint(
            config=config,
            params=init_params(config),
            vocab=vocab,
            schema=schema,
            train_log=[],
            density=None,
        )
        spec = SampleSpec(
            count=4, temperature=1.0, max_attempts_factor=2,
            max_new_tokens=24, seed=0,
        )
        with pytest.raises(AttemptBudgetExhaustedError) as exc:
            sample(untrained, spec)
        assert sum(exc.value.invalid_reasons.values()) >= 1

    def test_report_json(self, memo_ckpt):
        _, ckpt = memo_ckpt
        report = sample(ckpt, SampleSpec(count=2, temperature=0.05, seed=0))
        blob = report.to_json()
        assert blob["count"] == 2
        assert blob["attempts"] == report.attempts
        assert blob["invalid_rate"] == report.invalid_rate
        assert isinstance(blob["invalid_reasons"], dict)


@pytest.fixture(scope="module")
def bigram_ckpt():
    """Mood is a deterministic function of Color; 200 training rows."""
    rows = [("red", "calm")] * 100 + [("blue", "angry")] * 100
    table = from_rows(["Color", "Mood"], rows)
    ckpt = train(
        table,
        LmConfig(
            vocab_size=258, context_len=48, n_layers=1, n_heads=2,
            d_model=32, d_ff=64, seed=5,
        ),
        TrainConfig(
            epochs=25, batch_size=32, learning_rate=3e-3,
            weight_decay=0.0, seed=6,
        ),
    )
    return table, ckpt


class TestImpute:
    def test_complete_rows_unchanged(self, tiny_ckpt):
        table, ckpt = tiny_ckpt
        out = impute(ckpt, table, temperature=0.5, seed=0)
        assert out.rows == table.rows

    def test_missing_cells_filled_within_support(self, tiny_ckpt):
        table, ckpt = tiny_ckpt
        partial = table.with_rows([("", "46"), ("doctor", "")])
        out = impute(ckpt, partial, temperature=0.5, seed=1)
        support = table.schema.categorical_support["Occupation"]
        assert out.rows[0][0] in support
        assert out.rows[0][1] == "46"
        assert out.rows[1][0] == "doctor"
        float(out.rows[1][1])

    def test_observed_cells_byte_exact(self, tiny_ckpt):
        table, ckpt = tiny_ckpt
        partial = table.with_rows([("nurse", "")] * 4)
        out = impute(ckpt, partial, temperature=0.5, seed=2)
        assert all(row[0] == "nurse" for row in out.rows)

    def test_all_missing_row_rejected(self, tiny_ckpt):
        table, ckpt = tiny_ckpt
        partial = table.with_rows([("", "")])
        with pytest.raises(SamplingError):
            impute(ckpt, partial, seed=0)

    def test_schema_mismatch_rejected(self, tiny_ckpt):
        _, ckpt = tiny_ckpt
        other = from_rows(["A", "B"], [("x", "y")])
        with pytest.raises(SamplingError):
            impute(ckpt, other, seed=0)

    def test_out_of_support_observed_cell_rejected(self, tiny_ckpt):
        table, ckpt = tiny_ckpt
        partial = table.with_rows([("surgeon", "")])
        with pytest.raises(ConstraintUnsatisfiableError):
            impute(ckpt, partial, seed=0)

    def test_deterministic(self, tiny_ckpt):
        table, ckpt = tiny_ckpt
        partial = table.with_rows([("", "46"), ("doctor", "")])
        a = impute(ckpt, partial, temperature=0.7, seed=3)
        b = impute(ckpt, partial, temperature=0.7, seed=3)
        assert a.rows == b.rows

    def test_beats_marginal_baseline(self, bigram_ckpt):
        table, ckpt = bigram_ckpt
        truth = {"red": "calm", "blue": "angry"}
        partial = table.with_rows(
            [("red", "")] * 12 + [("blue", "")] * 12
        )
        out = impute(ckpt, partial, temperature=0.3, seed=4)
        hits = sum(row[1] == truth[row[0]] for row in out.rows)
        # Marginal frequency baseline is 0.5 on this balanced table.
        assert hits / len(out.rows) > 0.75
