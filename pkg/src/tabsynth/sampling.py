"""Row generation from a trained checkpoint.

Generation is unconstrained temperature sampling followed by reject-and-retry:
the model free-runs token by token until the end-of-record token, the text is
parsed, and invalid parses are discarded and counted. Three preconditioning
modes build the prompt: a bare feature name, a name with a density-drawn
value, or an arbitrary set of fixed name/value constraints.

Attempt i is fully determined by (seed, i): each attempt owns a derived rng
used first for its prompt draws, then one uniform per generated token. Results
are therefore independent of batch chunking.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .bpe import EOR, PAD
from .codec import Clause, decode, render_condition
from .density import FeatureDensity, fit_feature_density, fit_table_density
from .errors import (
    AttemptBudgetExhaustedError,
    ConstraintUnsatisfiableError,
    NonFiniteLogitsError,
    SamplingError,
)
from .lm import Checkpoint, decode_step, prefill
from .seeding import derive_key, rng as derive_rng
from .tables import MISSING, FeatureKind, Row, Table, parse_decimal

__all__ = [
    "Mode",
    "SampleSpec",
    "SampleReport",
    "next_token",
    "sample_tokens",
    "sample",
    "impute",
    "FeatureDensity",
    "fit_feature_density",
    "fit_table_density",
]

# Histogram key for valid parses that corrupt a constraint value (the model
# extended a constrained value into another in-support string). Not a parse
# reason, but the fidelity guarantee is hard, so such rows are rejected too.
CONSTRAINT_VIOLATION = "ConstraintViolation"


class Mode(Enum):
    FEATURE_NAME = "feature-name"
    NAME_VALUE = "name-value"
    MULTI_NAME_VALUE = "multi-name-value"


@dataclass(frozen=True)
class SampleSpec:
    count: int
    temperature: float = 0.7
    constraints: tuple[Clause, ...] = ()
    mode: Mode = Mode.FEATURE_NAME
    start_feature: str | None = None
    max_new_tokens: int = 128
    max_attempts_factor: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise SamplingError("count must be >= 1")
        if not (self.temperature > 0) or not np.isfinite(self.temperature):
            raise SamplingError("temperature must be finite and > 0")
        if self.max_new_tokens < 1:
            raise SamplingError("max_new_tokens must be >= 1")
        if self.max_attempts_factor < 1:
            raise SamplingError("max_attempts_factor must be >= 1")
        names = [c.feature for c in self.constraints]
        if len(set(names)) != len(names):
            raise SamplingError("constraint features must be distinct")
        if self.constraints and self.mode is not Mode.MULTI_NAME_VALUE:
            raise SamplingError(
                f"constraints are only used in multi-name-value mode, not {self.mode.value}"
            )
        if self.start_feature is not None and self.start_feature in names:
            raise SamplingError("start_feature must not be constrained")

    def to_json(self) -> dict:
        return {
            "count": self.count,
            "temperature": self.temperature,
            "constraints": [[c.feature, c.value] for c in self.constraints],
            "mode": self.mode.value,
            "start_feature": self.start_feature,
            "max_new_tokens": self.max_new_tokens,
            "max_attempts_factor": self.max_attempts_factor,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SampleSpec":
        return cls(
            count=int(data["count"]),
            temperature=float(data.get("temperature", 0.7)),
            constraints=tuple(
                Clause(f, v) for f, v in data.get("constraints", [])
            ),
            mode=Mode(data.get("mode", "feature-name")),
            start_feature=data.get("start_feature"),
            max_new_tokens=int(data.get("max_new_tokens", 128)),
            max_attempts_factor=int(data.get("max_attempts_factor", 10)),
            seed=int(data.get("seed", 0)),
        )


@dataclass(frozen=True)
class SampleReport:
    rows: Table
    attempts: int
    invalid: int
    invalid_reasons: dict[str, int] = field(default_factory=dict)

    @property
    def invalid_rate(self) -> float:
        return self.invalid / self.attempts if self.attempts else 0.0

    def to_json(self) -> dict:
        return {
            "count": len(self.rows),
            "attempts": self.attempts,
            "invalid": self.invalid,
            "invalid_rate": self.invalid_rate,
            "invalid_reasons": dict(sorted(self.invalid_reasons.items())),
        }


def _temperature_probs(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Stable softmax of logits/T along the last axis, in float64."""
    if not temperature > 0:
        raise SamplingError("temperature must be > 0")
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NonFiniteLogitsError("non-finite logits in sampling distribution")
    z = z / temperature
    z = z - z.max(axis=-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=-1, keepdims=True)


def _draw(cumulative: np.ndarray, u: float) -> int:
    idx = int(np.searchsorted(cumulative, u, side="right"))
    return min(idx, len(cumulative) - 1)


def next_token(
    logits: np.ndarray, temperature: float, rng: np.random.Generator
) -> int:
    """Draw one token id from softmax(logits / temperature)."""
    probs = _temperature_probs(np.asarray(logits).reshape(-1), temperature)
    return _draw(np.cumsum(probs), rng.random())


def sample_tokens(
    logits: np.ndarray, temperature: float, rng: np.random.Generator, n: int
) -> np.ndarray:
    """n independent next_token draws from one logits vector, vectorized."""
    probs = _temperature_probs(np.asarray(logits).reshape(-1), temperature)
    cumulative = np.cumsum(probs)
    idx = np.searchsorted(cumulative, rng.random(n), side="right")
    return np.minimum(idx, len(cumulative) - 1)


def _validate_constraints(ckpt: Checkpoint, constraints) -> None:
    schema = ckpt.schema
    for c in constraints:
        if c.feature not in schema.names:
            raise SamplingError(f"unknown constraint feature {c.feature!r}")
        if schema.kind_of(c.feature) is FeatureKind.CATEGORICAL:
            support = schema.categorical_support.get(c.feature, frozenset())
            if c.value not in support:
                raise ConstraintUnsatisfiableError(
                    f"value {c.value!r} is outside the support of {c.feature!r}"
                )
        else:
            if parse_decimal(c.value) is None:
                raise ConstraintUnsatisfiableError(
                    f"value {c.value!r} does not parse as a number for {c.feature!r}"
                )


def _attempt_prompt(
    spec: SampleSpec,
    ckpt: Checkpoint,
    density: FeatureDensity | None,
    rng: np.random.Generator,
) -> tuple[str, tuple[Clause, ...]]:
    """Build one attempt's prompt text and the clauses it must preserve."""
    schema = ckpt.schema
    if spec.mode is Mode.MULTI_NAME_VALUE and spec.constraints:
        return render_condition(spec.constraints, None, schema), spec.constraints
    if spec.start_feature is not None:
        name = spec.start_feature
    else:
        name = schema.names[int(rng.integers(len(schema.names)))]
    if spec.mode is Mode.NAME_VALUE:
        clause = Clause(name, density.entries[name].draw(rng))
        return render_condition([clause], None, schema), (clause,)
    return render_condition([], name, schema), ()


def _generate_batch(
    ckpt: Checkpoint,
    spec: SampleSpec,
    density: FeatureDensity | None,
    indices: range,
) -> list[tuple[str, tuple[Clause, ...]]]:
    """Run attempts `indices` in one batched pass; returns (text, clauses)."""
    config = ckpt.config
    rngs = [derive_rng(spec.seed, "attempt", i) for i in indices]
    prompts = [_attempt_prompt(spec, ckpt, density, r) for r in rngs]
    # A prompt's trailing lone space would tokenize as a standalone chunk the
    # model never saw mid-record; strip it so prompt tokens prefix record
    # tokens exactly.
    prompt_ids = [
        ckpt.vocab.tokenize(text.rstrip(" ")) for text, _ in prompts
    ]
    for ids in prompt_ids:
        if len(ids) > config.context_len - 1:
            raise SamplingError(
                f"prompt needs {len(ids)} tokens, over the model's room of "
                f"{config.context_len - 1}"
            )

    kv, logits = prefill(ckpt.params, config, prompt_ids)
    n = len(prompt_ids)
    generated: list[list[int]] = [[] for _ in range(n)]
    active = np.ones(n, dtype=bool)
    for _ in range(spec.max_new_tokens):
        can_extend = active & (kv.lengths < config.context_len)
        active &= can_extend
        if not active.any():
            break
        probs = _temperature_probs(logits, spec.temperature)
        cums = np.cumsum(probs, axis=-1)
        new_ids = np.full(n, PAD, dtype=np.int64)
        for b in np.flatnonzero(active):
            token = _draw(cums[b], rngs[b].random())
            new_ids[b] = token
            if token == EOR:
                active[b] = False
            else:
                generated[b].append(token)
        if not active.any():
            break
        logits = decode_step(ckpt.params, config, kv, new_ids)

    return [
        (ckpt.vocab.detokenize(ids + gen), clauses)
        for ids, gen, (_, clauses) in zip(prompt_ids, generated, prompts)
    ]


def _violates(row: Row, clauses, schema) -> bool:
    return any(row[schema.index_of(c.feature)] != c.value for c in clauses)


def sample(
    ckpt: Checkpoint,
    spec: SampleSpec,
    density: FeatureDensity | None = None,
    *,
    chunk_size: int = 64,
    workers: int = 1,
) -> SampleReport:
    """Draw spec.count valid rows, rejecting texts that fail parsing.

    Attempts are processed in batches but consumed in attempt order; the total
    budget is count * max_attempts_factor. Raises once the budget is exhausted,
    reporting the histogram of rejection reasons. Each attempt index owns its
    rng stream, so the output is invariant to chunk_size and workers.
    """
    schema = ckpt.schema
    if workers < 1:
        raise SamplingError(f"workers must be >= 1, got {workers}")
    if density is None:
        density = ckpt.density
    if spec.mode is Mode.NAME_VALUE and density is None:
        raise SamplingError(
            "name-value mode needs a feature density and the checkpoint has none"
        )
    if spec.start_feature is not None and spec.start_feature not in schema.names:
        raise SamplingError(f"unknown start feature {spec.start_feature!r}")
    _validate_constraints(ckpt, spec.constraints)

    budget = spec.count * spec.max_attempts_factor
    collected: list[Row] = []
    attempts = 0
    invalid = 0
    reasons: dict[str, int] = {}
    next_index = 0
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while len(collected) < spec.count and attempts < budget:
            remaining = spec.count - len(collected)
            planned = min(
                workers * chunk_size, budget - attempts, remaining + 8 * workers
            )
            chunks: list[range] = []
            while planned > 0:
                step = min(chunk_size, planned)
                chunks.append(range(next_index, next_index + step))
                next_index += step
                planned -= step
            if pool is None:
                batches = [_generate_batch(ckpt, spec, density, r) for r in chunks]
            else:
                batches = list(
                    pool.map(
                        lambda r: _generate_batch(ckpt, spec, density, r), chunks
                    )
                )
            for text, clauses in itertools.chain.from_iterable(batches):
                if len(collected) == spec.count:
                    break
                attempts += 1
                parsed = decode(text, schema)
                if parsed.valid and not _violates(parsed.row, clauses, schema):
                    collected.append(parsed.row)
                else:
                    invalid += 1
                    key = (
                        parsed.reason.value if parsed.reason else CONSTRAINT_VIOLATION
                    )
                    reasons[key] = reasons.get(key, 0) + 1
    finally:
        if pool is not None:
            pool.shutdown()

    if len(collected) < spec.count:
        raise AttemptBudgetExhaustedError(
            f"collected {len(collected)}/{spec.count} valid rows in "
            f"{attempts} attempts",
            reasons,
        )
    return SampleReport(
        rows=Table(schema=schema, rows=tuple(collected)),
        attempts=attempts,
        invalid=invalid,
        invalid_reasons=reasons,
    )


def impute(
    ckpt: Checkpoint,
    partial: Table,
    temperature: float = 0.7,
    seed: int = 0,
    *,
    max_new_tokens: int = 128,
    max_attempts_factor: int = 10,
    density: FeatureDensity | None = None,
) -> Table:
    """Fill the missing cells of each row by conditional generation.

    Each row's observed cells become fixed constraints, shuffled into a fresh
    order per row, and the model completes the rest. Observed cells come back
    byte-exact. Rows with nothing missing pass through untouched.
    """
    schema = ckpt.schema
    if partial.schema.names != schema.names:
        raise SamplingError(
            "partial table features do not match the checkpoint schema"
        )
    out: list[Row] = []
    for ri, row in enumerate(partial.rows):
        observed = [j for j, cell in enumerate(row) if cell != MISSING]
        if len(observed) == len(row):
            out.append(row)
            continue
        if not observed:
            raise SamplingError(f"row {ri} has no observed cells to condition on")
        order = derive_rng(seed, "impute-order", ri).permutation(len(observed))
        clauses = tuple(
            Clause(schema.names[observed[k]], row[observed[k]]) for k in order
        )
        report = sample(
            ckpt,
            SampleSpec(
                count=1,
                temperature=temperature,
                constraints=clauses,
                mode=Mode.MULTI_NAME_VALUE,
                max_new_tokens=max_new_tokens,
                max_attempts_factor=max_attempts_factor,
                seed=derive_key(seed, "impute-row", ri),
            ),
            density,
            chunk_size=4,
        )
        completed = report.rows.rows[0]
        merged = tuple(
            row[j] if j in set(observed) else completed[j]
            for j in range(len(row))
        )
        out.append(merged)
    return replace(partial, rows=tuple(out))
